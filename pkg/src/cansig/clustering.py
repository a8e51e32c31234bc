"""Density clustering and the two-stage payload slicing.

Stage one clusters whole bytes on (flip rate, scaled average, distinct ratio)
and merges adjacent same-cluster bytes into segments of at most two bytes.
Stage two clusters the bits of each segment on (flip rate, average) and merges
adjacent same-cluster bits into signal slices. Clusters live in feature space;
only spatially adjacent members are merged, so slices always tile the payload.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .features import (
    BlockFeatures,
    ByteFeatures,
    bit_feature_table,
    byte_feature_table,
    compute_block_features,
)
from .trace import IdTrace

NOISE = -1

#: Byte-level clusters are capped at two bytes; longer same-cluster runs are
#: split left to right.
MAX_SEGMENT_BYTES = 2


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 0.5
    min_pts: int = 2

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


@dataclass
class ByteSegment:
    """A run of 1..2 adjacent payload bytes sharing a byte-level cluster."""

    start_byte: int
    end_byte: int
    cluster_id: int
    features: list[ByteFeatures] = field(default_factory=list)

    @property
    def first_bit(self) -> int:
        return 8 * (self.start_byte - 1) + 1

    @property
    def last_bit(self) -> int:
        return 8 * self.end_byte


@dataclass
class SignalSlice:
    """A contiguous bit range [m, n] of one CAN ID's payload."""

    can_id: int
    m: int
    n: int
    features: BlockFeatures | None = None
    theta: float | None = None
    label: str | None = None
    descriptive_label: str | None = None
    dtw_distance: float | None = None
    dtw_distances: dict[str, float] | None = None

    @property
    def width(self) -> int:
        return self.n - self.m + 1


def dbscan(points: np.ndarray, params: DbscanParams) -> np.ndarray:
    """Cluster points, returning one id per point (noise = -1).

    Standard DBSCAN semantics with Euclidean distance: neighborhoods are
    closed balls of radius eps and include the point itself. Points are
    visited in input order and seed queues expand in index order, so output
    is deterministic for a fixed input order.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if not np.isfinite(points).all():
        raise ValueError("non-finite feature coordinates")

    diffs = points[:, None, :] - points[None, :, :]
    adjacency = (diffs * diffs).sum(axis=2) <= params.eps**2
    neighbor_counts = adjacency.sum(axis=1)
    is_core = neighbor_counts >= params.min_pts

    UNVISITED = -2
    labels = np.full(n, UNVISITED, dtype=np.int64)
    cluster = 0
    for start in range(n):
        if labels[start] != UNVISITED:
            continue
        if not is_core[start]:
            labels[start] = NOISE
            continue
        labels[start] = cluster
        queue = list(np.flatnonzero(adjacency[start]))
        head = 0
        while head < len(queue):
            point = queue[head]
            head += 1
            if labels[point] == NOISE:
                labels[point] = cluster  # border point claimed by first cluster
            if labels[point] != UNVISITED:
                continue
            labels[point] = cluster
            if is_core[point]:
                queue.extend(np.flatnonzero(adjacency[point]))
        cluster += 1
    return labels


#: Coordinates are fractions in [0, 1] (flip rates, scaled averages, distinct
#: ratios). Spread below this carries no usable cluster structure; z-scoring
#: it to unit variance would only amplify noise.
MIN_STRUCTURE_STD = 0.08


def _noise_floor(frame_count: int) -> float:
    # Constant up to estimation noise: ~3 sigma of a worst-case rate estimate
    # from frame_count samples, but never below the structure floor.
    return max(1.5 * math.sqrt(0.25 / max(frame_count - 1, 1)), MIN_STRUCTURE_STD)


def standardize(points: np.ndarray, frame_count: int) -> np.ndarray:
    """Z-score each coordinate, dropping (near-)constant ones.

    If every coordinate is dropped all points are identical for clustering
    purposes and collapse to a single zero column.
    """
    points = np.asarray(points, dtype=np.float64)
    mean = points.mean(axis=0)
    std = points.std(axis=0)
    keep = std > _noise_floor(frame_count)
    if not keep.any():
        return np.zeros((len(points), 1))
    return (points[:, keep] - mean[keep]) / std[keep]


def _merge_adjacent(labels: np.ndarray) -> list[tuple[int, int, int]]:
    """Group consecutive indices sharing a non-noise label; noise stays single.

    Returns (start, end, label) runs over 0-based positions, inclusive.
    """
    runs: list[tuple[int, int, int]] = []
    start = 0
    for pos in range(1, len(labels) + 1):
        boundary = (
            pos == len(labels)
            or labels[pos] != labels[start]
            or labels[start] == NOISE
        )
        if boundary:
            runs.append((start, pos - 1, int(labels[start])))
            start = pos
    return runs


def cluster_bytes(trace: IdTrace, params: DbscanParams) -> list[ByteSegment]:
    """Stage one: tile the payload into byte segments of width 1..2."""
    table = byte_feature_table(trace)
    embedded = np.column_stack([table[:, 0], table[:, 1] / 255.0, table[:, 2]])
    labels = dbscan(standardize(embedded, trace.frame_count), params)

    segments: list[ByteSegment] = []
    for start, end, label in _merge_adjacent(labels):
        for seg_start in range(start, end + 1, MAX_SEGMENT_BYTES):
            seg_end = min(seg_start + MAX_SEGMENT_BYTES - 1, end)
            segments.append(
                ByteSegment(
                    start_byte=seg_start + 1,
                    end_byte=seg_end + 1,
                    cluster_id=label,
                    features=[
                        ByteFeatures(*table[i]) for i in range(seg_start, seg_end + 1)
                    ],
                )
            )
    return segments


def slice_bits(trace: IdTrace, segment: ByteSegment, params: DbscanParams) -> list[SignalSlice]:
    """Stage two: tile one byte segment into bit-level signal slices."""
    first, last = segment.first_bit, segment.last_bit
    table = bit_feature_table(trace, first, last)
    labels = dbscan(standardize(table, trace.frame_count), params)

    slices: list[SignalSlice] = []
    for start, end, _label in _merge_adjacent(labels):
        m = first + start
        n = first + end
        slices.append(
            SignalSlice(
                can_id=trace.can_id,
                m=m,
                n=n,
                features=compute_block_features(trace, m, n),
            )
        )
    return slices


def slice_payload(trace: IdTrace, byte_params: DbscanParams, bit_params: DbscanParams) -> list[SignalSlice]:
    """Run both stages over one ID; the result tiles bits 1..8*L in order."""
    slices: list[SignalSlice] = []
    for segment in cluster_bytes(trace, byte_params):
        slices.extend(slice_bits(trace, segment, bit_params))
    return slices
