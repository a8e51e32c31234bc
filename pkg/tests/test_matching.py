"""Signal serialization and DTW, checked against brute-force path enumeration."""

import math

import numpy as np
import pytest

from cansig.clustering import SignalSlice
from cansig.errors import NoTemplates, SeriesTooShort
from cansig.matching import (
    CandidateSeries,
    downsample,
    dtw_alignment,
    dtw_distance,
    match_label,
    serialize_signal,
    znorm,
)
from cansig.obd import Template
from cansig.trace import Frame, RawTrace, group_by_id


def brute_force_dtw(s, e):
    """Enumerate every admissible warping path; return (cost, best_length)."""
    best = [math.inf, None]

    def walk(i, j, acc, steps):
        acc += (s[i] - e[j]) ** 2
        if acc >= best[0]:
            return
        if i == len(s) - 1 and j == len(e) - 1:
            best[0] = acc
            best[1] = steps
            return
        if i + 1 < len(s) and j + 1 < len(e):
            walk(i + 1, j + 1, acc, steps + 1)
        if i + 1 < len(s):
            walk(i + 1, j, acc, steps + 1)
        if j + 1 < len(e):
            walk(i, j + 1, acc, steps + 1)

    walk(0, 0, 0.0, 1)
    return math.sqrt(best[0]), best[1]


class TestSerializeSignal:
    def make_trace(self, payloads):
        frames = [Frame(i * 0.01, 0x20, len(p), bytes(p)) for i, p in enumerate(payloads)]
        return group_by_id(RawTrace(frames=frames))[0x20]

    def test_two_bit_value(self):
        trace = self.make_trace([[0b10000000], [0b01000000]])
        series = serialize_signal(trace, SignalSlice(can_id=0x20, m=1, n=2))
        assert series.values.tolist() == [2.0, 1.0]

    def test_byte_aligned_slice_equals_column(self):
        payloads = [[i, 255 - i, 7] for i in range(10)]
        trace = self.make_trace(payloads)
        series = serialize_signal(trace, SignalSlice(can_id=0x20, m=17, n=24))
        assert series.values.tolist() == [7.0] * 10
        assert len(series.values) == trace.frame_count

    def test_cross_byte_slice(self):
        trace = self.make_trace([[0x00, 0x0A, 0xBC]])
        series = serialize_signal(trace, SignalSlice(can_id=0x20, m=13, n=24))
        assert series.values.tolist() == [0xABC]


class TestDtwDistance:
    def test_identical_sequences(self):
        assert dtw_distance([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_repeated_element_aligns_free(self):
        assert dtw_distance([1.0, 2.0, 3.0], [1.0, 2.0, 2.0, 3.0]) == 0.0

    def test_constant_offset_pair(self):
        assert dtw_distance([0.0, 0.0], [1.0, 1.0]) == pytest.approx(math.sqrt(2.0))

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            dtw_distance([1.0], [1.0, 2.0])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(8)
        for _ in range(500):
            y = int(rng.integers(2, 7))
            z = int(rng.integers(2, 7))
            s = rng.integers(0, 5, y).astype(float)
            e = rng.integers(0, 5, z).astype(float)
            expected, _ = brute_force_dtw(s.tolist(), e.tolist())
            assert dtw_distance(s, e) == pytest.approx(expected, abs=1e-9)

    def test_symmetry_and_identity(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            s = rng.normal(size=int(rng.integers(2, 30)))
            e = rng.normal(size=int(rng.integers(2, 30)))
            assert dtw_distance(s, s) == 0.0
            assert dtw_distance(s, e) == pytest.approx(dtw_distance(e, s), rel=1e-12)

    def test_alignment_path_length_bounds(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            y = int(rng.integers(2, 12))
            z = int(rng.integers(2, 12))
            s = rng.normal(size=y)
            e = rng.normal(size=z)
            distance, path = dtw_alignment(s, e)
            assert max(y, z) <= len(path) <= y + z - 1
            assert path[0] == (0, 0) and path[-1] == (y - 1, z - 1)
            assert distance == pytest.approx(dtw_distance(s, e), rel=1e-12)
            for (i0, j0), (i1, j1) in zip(path, path[1:]):
                assert (i1 - i0, j1 - j0) in {(0, 1), (1, 0), (1, 1)}

    def test_band_still_reaches_corner(self):
        s = np.arange(30.0)
        e = np.arange(10.0)
        banded = dtw_distance(s, e, band=2)
        assert math.isfinite(banded)
        assert banded >= dtw_distance(s, e)


class TestZnormDownsample:
    def test_znorm_zero_variance(self):
        assert znorm(np.array([3.0, 3.0, 3.0])).tolist() == [0.0, 0.0, 0.0]

    def test_znorm_stats(self):
        z = znorm(np.arange(10.0))
        assert z.mean() == pytest.approx(0.0, abs=1e-12)
        assert z.std() == pytest.approx(1.0, abs=1e-12)

    def test_downsample_noop_when_short(self):
        x = np.arange(10.0)
        assert downsample(x, 20) is x

    def test_downsample_length_and_mean(self):
        x = np.arange(100.0)
        out = downsample(x, 10)
        assert len(out) == 10
        assert out.mean() == pytest.approx(x.mean())


def template(label, values):
    values = np.asarray(values, dtype=float)
    return Template(label, np.arange(len(values), dtype=float), values)


class TestMatchLabel:
    def candidate(self, values):
        values = np.asarray(values, dtype=float)
        return CandidateSeries(1, 1, 8, values, np.arange(len(values), dtype=float))

    def test_exact_template_wins(self):
        templates = {
            "VehicleSpeed": template("VehicleSpeed", [0, 10, 20, 10, 0, 30]),
            "EngineSpeed": template("EngineSpeed", [5, 1, 8, 2, 9, 1]),
        }
        result = match_label(self.candidate([0, 10, 20, 10, 0, 30]), templates)
        assert result.matched_label == "VehicleSpeed"
        assert result.distance == pytest.approx(0.0, abs=1e-9)
        assert set(result.per_template) == set(templates)

    def test_affine_invariance_under_znorm(self):
        base = np.array([0.0, 10.0, 20.0, 10.0, 0.0, 30.0])
        templates = {
            "EngineSpeed": template("EngineSpeed", base),
            "ThrottlePosition": template("ThrottlePosition", [9, 0, 9, 0, 9, 0]),
        }
        result = match_label(self.candidate(4.0 * base + 100.0), templates)
        assert result.matched_label == "EngineSpeed"
        assert result.distance == pytest.approx(0.0, abs=1e-9)

    def test_no_templates(self):
        with pytest.raises(NoTemplates):
            match_label(self.candidate([1.0, 2.0]), {})

    def test_tie_breaks_lexicographically(self):
        values = [0.0, 1.0, 0.0, 1.0]
        templates = {
            "B_label": template("B_label", values),
            "A_label": template("A_label", values),
        }
        result = match_label(self.candidate(values), templates)
        assert result.matched_label == "A_label"

    def test_max_distance_rejects(self):
        templates = {"EngineSpeed": template("EngineSpeed", [9, 0, 9, 0])}
        result = match_label(
            self.candidate([0.0, 0.1, 0.0, 0.1]), templates, max_distance=1e-6
        )
        assert result.rejected
        assert result.matched_label is None

    def test_argmin_invariant_under_candidate_scaling(self):
        rng = np.random.default_rng(13)
        templates = {
            "EngineSpeed": template("EngineSpeed", rng.normal(size=40)),
            "VehicleSpeed": template("VehicleSpeed", rng.normal(size=40)),
            "ThrottlePosition": template("ThrottlePosition", rng.normal(size=40)),
        }
        base = rng.normal(size=60)
        first = match_label(self.candidate(base), templates)
        scaled = match_label(self.candidate(-0.5 * base + 7.0), templates)
        # Negative scaling flips the shape, so compare a positive-scale variant.
        positive = match_label(self.candidate(3.0 * base + 42.0), templates)
        assert positive.matched_label == first.matched_label
        assert positive.distance == pytest.approx(first.distance, rel=1e-9)
        assert scaled.per_template.keys() == first.per_template.keys()
