"""DBSCAN against a naive density-reachability oracle, plus slicing behavior."""

import numpy as np
import pytest

from cansig.clustering import (
    DbscanParams,
    NOISE,
    cluster_bytes,
    dbscan,
    slice_bits,
    slice_payload,
)
from cansig.trace import Frame, RawTrace, group_by_id


def naive_dbscan(points, eps, min_pts):
    """Reference implementation: explicit core sets, union-find components,
    border points claimed by the earliest-created cluster."""
    n = len(points)
    close = [
        [j for j in range(n) if sum((points[i][d] - points[j][d]) ** 2 for d in range(len(points[i]))) <= eps * eps]
        for i in range(n)
    ]
    core = [len(close[i]) >= min_pts for i in range(n)]

    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        if not core[i]:
            continue
        for j in close[i]:
            if core[j]:
                parent[find(i)] = find(j)

    # Clusters are numbered by the order their first core point appears.
    cluster_of_root: dict[int, int] = {}
    labels = [NOISE] * n
    next_id = 0
    for i in range(n):
        if core[i]:
            root = find(i)
            if root not in cluster_of_root:
                cluster_of_root[root] = next_id
                next_id += 1
            labels[i] = cluster_of_root[root]
    for i in range(n):
        if core[i]:
            continue
        neighbor_clusters = [labels[j] for j in close[i] if core[j]]
        if neighbor_clusters:
            labels[i] = min(neighbor_clusters)
    return labels


class TestDbscan:
    def test_two_pairs(self):
        points = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]])
        labels = dbscan(points, DbscanParams(eps=0.5, min_pts=2))
        assert labels.tolist() == [0, 0, 1, 1]

    def test_single_point_is_noise(self):
        labels = dbscan(np.array([[1.0, 2.0]]), DbscanParams(eps=0.5, min_pts=2))
        assert labels.tolist() == [NOISE]

    def test_identical_points_one_cluster(self):
        labels = dbscan(np.zeros((5, 3)), DbscanParams(eps=0.5, min_pts=2))
        assert labels.tolist() == [0] * 5

    def test_min_pts_one_makes_everything_core(self):
        labels = dbscan(np.array([[0.0], [100.0]]), DbscanParams(eps=0.5, min_pts=1))
        assert labels.tolist() == [0, 1]

    def test_matches_naive_oracle_randomized(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            n = int(rng.integers(1, 201))
            dims = int(rng.integers(1, 4))
            points = rng.uniform(-5, 5, size=(n, dims))
            if rng.random() < 0.5:  # encourage clumps
                centers = rng.uniform(-5, 5, size=(4, dims))
                points = centers[rng.integers(0, 4, n)] + rng.normal(0, 0.3, (n, dims))
            eps = float(rng.uniform(0.1, 2.0))
            min_pts = int(rng.integers(1, 8))
            got = dbscan(points, DbscanParams(eps=eps, min_pts=min_pts)).tolist()
            want = naive_dbscan(points.tolist(), eps, min_pts)
            assert got == want


def build_trace(columns):
    rows = list(zip(*columns))
    frames = [Frame(i * 0.01, 0x42, len(row), bytes(row)) for i, row in enumerate(rows)]
    return group_by_id(RawTrace(frames=frames))[0x42]


def repeat(pattern, times):
    return (pattern * times)[: len(pattern) * times]


PARAMS = DbscanParams(eps=0.5, min_pts=2)


class TestClusterBytes:
    def test_single_byte_payload(self):
        trace = build_trace([[1, 2, 3, 4] * 8])
        segments = cluster_bytes(trace, PARAMS)
        assert [(s.start_byte, s.end_byte) for s in segments] == [(1, 1)]

    def test_identical_pair_distinct_third(self):
        constant = [0x00] * 32
        active = repeat([0x00, 0xFF], 16)
        trace = build_trace([constant, constant, active])
        segments = cluster_bytes(trace, PARAMS)
        assert [(s.start_byte, s.end_byte) for s in segments] == [(1, 2), (3, 3)]

    def test_eight_constant_bytes_split_into_pairs(self):
        trace = build_trace([[7] * 32] * 8)
        segments = cluster_bytes(trace, PARAMS)
        assert [(s.start_byte, s.end_byte) for s in segments] == [
            (1, 2), (3, 4), (5, 6), (7, 8),
        ]
        assert all(s.end_byte - s.start_byte + 1 <= 2 for s in segments)

    def test_segments_tile_payload(self):
        rng = np.random.default_rng(5)
        columns = [rng.integers(0, 256, 64).tolist() for _ in range(8)]
        trace = build_trace(columns)
        segments = cluster_bytes(trace, PARAMS)
        covered = []
        for s in segments:
            covered.extend(range(s.start_byte, s.end_byte + 1))
        assert covered == list(range(1, 9))


class TestSliceBits:
    def test_constant_nibble_vs_active_nibble(self):
        # bits 1-4 constant, bits 5-8 alternate every frame
        column = repeat([0x0F, 0x00], 16)
        trace = build_trace([column])
        segments = cluster_bytes(trace, PARAMS)
        slices = slice_bits(trace, segments[0], PARAMS)
        assert [(s.m, s.n) for s in slices] == [(1, 4), (5, 8)]

    def test_uniform_features_single_slice(self):
        rng = np.random.default_rng(11)
        values = rng.integers(0, 65536, 400)
        hi = (values >> 8).astype(int).tolist()
        lo = (values & 0xFF).astype(int).tolist()
        trace = build_trace([hi, lo])
        segments = cluster_bytes(trace, PARAMS)
        assert [(s.start_byte, s.end_byte) for s in segments] == [(1, 2)]
        slices = slice_bits(trace, segments[0], PARAMS)
        assert [(s.m, s.n) for s in slices] == [(1, 16)]

    def test_alternating_bit_features_give_single_bit_slices(self):
        # Odd bits alternate 0/1 per frame; even bits constant 1.
        rows = []
        for i in range(32):
            rows.append([i % 2, 1] * 4)
        bits = np.array(rows, dtype=np.uint8)
        data = np.packbits(bits, axis=1)
        frames = [Frame(i * 0.01, 7, 1, data[i].tobytes()) for i in range(32)]
        trace = group_by_id(RawTrace(frames=frames))[7]
        segments = cluster_bytes(trace, PARAMS)
        slices = []
        for segment in segments:
            slices.extend(slice_bits(trace, segment, PARAMS))
        assert [(s.m, s.n) for s in slices] == [(k, k) for k in range(1, 9)]


class TestSlicePayload:
    def test_tiling_and_cap_random_traces(self):
        rng = np.random.default_rng(99)
        for _ in range(10):
            width = int(rng.integers(1, 9))
            rows = int(rng.integers(4, 60))
            data = rng.integers(0, 256, size=(rows, width)).astype(np.uint8)
            frames = [
                Frame(i * 0.01, 0x50, width, data[i].tobytes()) for i in range(rows)
            ]
            trace = group_by_id(RawTrace(frames=frames))[0x50]
            slices = slice_payload(trace, PARAMS, PARAMS)
            covered = []
            for s in slices:
                assert s.n - s.m + 1 <= 16
                covered.extend(range(s.m, s.n + 1))
            assert covered == list(range(1, 8 * width + 1))

    def test_deterministic(self):
        rng = np.random.default_rng(123)
        data = rng.integers(0, 256, size=(50, 8)).astype(np.uint8)
        frames = [Frame(i * 0.01, 0x60, 8, data[i].tobytes()) for i in range(50)]
        trace = group_by_id(RawTrace(frames=frames))[0x60]
        first = [(s.m, s.n) for s in slice_payload(trace, PARAMS, PARAMS)]
        second = [(s.m, s.n) for s in slice_payload(trace, PARAMS, PARAMS)]
        assert first == second


class TestParams:
    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            DbscanParams(eps=0.0)
        with pytest.raises(ValueError):
            DbscanParams(min_pts=0)
