"""Scoring metrics: exact-boundary accuracy, containment coverage, majority labels."""

import pytest

from cansig.clustering import SignalSlice
from cansig.dbc import GroundTruth, Message, SignalSpec, internal_to_dbc_pos
from cansig.errors import MissingAnnotations, NoOverlap
from cansig.evaluate import (
    evaluate,
    labeling_accuracy,
    slicing_accuracy,
    slicing_coverage,
)


def truth_signal(name, m, n, category=None, descriptive=None):
    return SignalSpec(
        name=name,
        start_bit=internal_to_dbc_pos(m),
        length_bits=n - m + 1,
        byte_order="big",
        category=category,
        descriptive=descriptive,
    )


def make_truth(per_id):
    truth = GroundTruth()
    for can_id, signals in per_id.items():
        truth.messages[can_id] = Message(
            can_id=can_id, name=f"MSG_{can_id:03X}", dlc=8, signals=signals
        )
    return truth


def sl(can_id, m, n, label=None, descriptive=None):
    return SignalSlice(can_id=can_id, m=m, n=n, label=label, descriptive_label=descriptive)


class TestSlicingMetrics:
    def test_exact_match_is_perfect(self):
        truth = make_truth({1: [truth_signal("A", 1, 8, "Dynamic")]})
        report = evaluate({1: [sl(1, 1, 8, "Dynamic")]}, truth, mode="slicing")
        assert report.zeta == 1.0
        assert report.varpi == 1.0

    def test_split_signal_zero_accuracy_full_coverage(self):
        truth = make_truth({1: [truth_signal("A", 1, 8)]})
        report = evaluate({1: [sl(1, 1, 4), sl(1, 5, 8)]}, truth, mode="slicing")
        assert report.zeta == 0.0
        assert report.varpi == 1.0

    def test_straddling_slice_uncovered(self):
        truth = make_truth({1: [truth_signal("A", 1, 4), truth_signal("B", 5, 8)]})
        report = evaluate({1: [sl(1, 1, 8)]}, truth, mode="slicing")
        assert report.zeta == 0.0
        assert report.varpi == 0.0

    def test_micro_average_weights_by_bits(self):
        truth = make_truth(
            {
                1: [truth_signal("A", 1, 8)],   # exact -> 8 bits correct
                2: [truth_signal("B", 1, 4)],   # split -> 0 of 4
            }
        )
        inferred = {1: [sl(1, 1, 8)], 2: [sl(2, 1, 2), sl(2, 3, 4)]}
        report = evaluate(inferred, truth, mode="slicing")
        assert report.zeta == pytest.approx(8 / 12)
        # aggregate equals bit-weighted mean of per-ID ratios
        per_id = report.per_id
        weighted = sum(
            b.accuracy.numerator for b in per_id.values()
        ) / sum(b.accuracy.denominator for b in per_id.values())
        assert report.zeta == pytest.approx(weighted)

    def test_no_overlap(self):
        truth = make_truth({1: [truth_signal("A", 1, 8)]})
        with pytest.raises(NoOverlap):
            evaluate({2: [sl(2, 1, 8)]}, truth, mode="slicing")

    def test_ids_outside_intersection_ignored(self):
        truth = make_truth({1: [truth_signal("A", 1, 8)], 3: [truth_signal("C", 1, 8)]})
        report = evaluate({1: [sl(1, 1, 8)], 2: [sl(2, 1, 4)]}, truth, mode="slicing")
        assert report.evaluated_ids == [1]
        assert report.zeta == 1.0

    def test_relabeling_ids_preserves_metrics(self):
        truth_a = make_truth({1: [truth_signal("A", 1, 8)], 2: [truth_signal("B", 1, 16)]})
        truth_b = make_truth({9: [truth_signal("A", 1, 8)], 4: [truth_signal("B", 1, 16)]})
        inferred_a = {1: [sl(1, 1, 8)], 2: [sl(2, 1, 8), sl(2, 9, 16)]}
        inferred_b = {9: [sl(9, 1, 8)], 4: [sl(4, 1, 8), sl(4, 9, 16)]}
        ra = evaluate(inferred_a, truth_a, mode="slicing")
        rb = evaluate(inferred_b, truth_b, mode="slicing")
        assert ra.zeta == rb.zeta
        assert ra.varpi == rb.varpi


class TestPerfectScoreIffExact:
    def test_random_tilings(self):
        import numpy as np

        rng = np.random.default_rng(31)
        for _ in range(30):
            per_id = {}
            inferred = {}
            for can_id in range(1, int(rng.integers(2, 5))):
                signals = []
                slices = []
                bit = 1
                index = 0
                while bit <= 32:
                    width = int(rng.integers(1, 12))
                    end = min(bit + width - 1, 32)
                    signals.append(truth_signal(f"S{can_id}_{index}", bit, end))
                    slices.append(sl(can_id, bit, end))
                    bit = end + 1
                    index += 1
                per_id[can_id] = signals
                inferred[can_id] = slices
            truth = make_truth(per_id)
            exact = evaluate(inferred, truth, mode="slicing")
            assert exact.zeta == 1.0 and exact.varpi == 1.0

            # Perturb one boundary: a split slice must pull zeta below 1.
            target = next(
                ((cid, i) for cid, slices in inferred.items()
                 for i, s in enumerate(slices) if s.n > s.m),
                None,
            )
            if target is None:
                continue
            cid, i = target
            victim = inferred[cid][i]
            inferred[cid][i : i + 1] = [
                sl(cid, victim.m, victim.m), sl(cid, victim.m + 1, victim.n),
            ]
            perturbed = evaluate(inferred, truth, mode="slicing")
            assert perturbed.zeta < 1.0
            assert perturbed.varpi == 1.0  # still contained


class TestLabelingMetrics:
    def test_majority_rule(self):
        truth = make_truth({1: [truth_signal("A", 1, 6, "Dynamic")]})
        # Slice spans 6 Dynamic bits + 2 outside any signal (implicit Unused).
        report = evaluate({1: [sl(1, 1, 8, "Dynamic")]}, truth, mode="general")
        assert report.xi_general == 1.0

    def test_wrong_label_counts(self):
        truth = make_truth({1: [truth_signal("A", 1, 8, "Verification")]})
        report = evaluate({1: [sl(1, 1, 8, "Dynamic")]}, truth, mode="general")
        assert report.xi_general == 0.0

    def test_missing_annotations(self):
        truth = make_truth({1: [truth_signal("A", 1, 8)]})
        with pytest.raises(MissingAnnotations):
            evaluate({1: [sl(1, 1, 8, "Dynamic")]}, truth, mode="general")

    def test_auto_mode_skips_labels_without_annotations(self):
        truth = make_truth({1: [truth_signal("A", 1, 8)]})
        report = evaluate({1: [sl(1, 1, 8, "Dynamic")]}, truth, mode="auto")
        assert report.xi_general is None

    def test_descriptive_accuracy(self):
        truth = make_truth(
            {
                1: [
                    truth_signal("A", 1, 16, "Dynamic", "VehicleSpeed"),
                    truth_signal("B", 17, 32, "Dynamic", "EngineSpeed"),
                ]
            }
        )
        inferred = {
            1: [
                sl(1, 1, 16, "Dynamic", "VehicleSpeed"),
                sl(1, 17, 32, "Dynamic", "ThrottlePosition"),
            ]
        }
        report = evaluate(inferred, truth, mode="both")
        assert report.xi_descriptive == pytest.approx(0.5)

    def test_descriptive_skips_unannotated_regions(self):
        truth = make_truth({1: [truth_signal("A", 1, 8, "Dynamic")]})
        inferred = {1: [sl(1, 1, 8, "Dynamic", "VehicleSpeed")]}
        report = evaluate(inferred, truth, mode="both")
        assert report.xi_descriptive is None

    def test_per_type_breakdown(self):
        truth = make_truth(
            {
                1: [
                    truth_signal("A", 1, 8, "Dynamic"),
                    truth_signal("B", 9, 10, "Switch"),
                ]
            }
        )
        inferred = {1: [sl(1, 1, 8, "Dynamic"), sl(1, 9, 10, "Dynamic")]}
        report = evaluate(inferred, truth, mode="general")
        assert report.per_type["Dynamic"].label_general.value == 1.0
        assert report.per_type["Switch"].label_general.value == 0.0
        assert report.per_length[8].accuracy.value == 1.0

    def test_report_serializes(self):
        truth = make_truth({1: [truth_signal("A", 1, 8, "Dynamic")]})
        report = evaluate({1: [sl(1, 1, 8, "Dynamic")]}, truth, mode="general")
        doc = report.to_dict()
        assert doc["zeta"] == 1.0
        assert doc["per_id"]["0x1"]["accuracy"]["den"] == 8


class TestMetricFunctions:
    def test_individual_operations(self):
        truth = make_truth(
            {
                1: [
                    truth_signal("A", 1, 8, "Dynamic", "VehicleSpeed"),
                    truth_signal("B", 9, 12, "Switch"),
                ]
            }
        )
        inferred = {
            1: [
                sl(1, 1, 8, "Dynamic", "VehicleSpeed"),
                sl(1, 9, 10, "Switch"),
                sl(1, 11, 12, "Switch"),
            ]
        }
        assert slicing_accuracy(inferred, truth) == pytest.approx(8 / 12)
        assert slicing_coverage(inferred, truth) == 1.0
        assert labeling_accuracy(inferred, truth, mode="general") == 1.0
        assert labeling_accuracy(inferred, truth, mode="descriptive") == 1.0
        with pytest.raises(ValueError):
            labeling_accuracy(inferred, truth, mode="both")
