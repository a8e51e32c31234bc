"""Per-byte, per-bit, and bit-block statistics driving slicing and labeling.

All indices are 1-based: byte i in 1..L, bit k in 1..8*L, blocks are
inclusive bit ranges [m, n]. Padded byte positions (variable-DLC traces) are
excluded: averages and distinct counts skip padded rows, and flip rates drop
any adjacent pair where either row is padded, from numerator and denominator
alike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidRange, TooFewFrames
from .trace import IdTrace


@dataclass(frozen=True)
class ByteFeatures:
    """Flip rate, average value, distinct-value ratio of one payload byte."""

    flip_rate: float
    average: float
    distinct_ratio: float


@dataclass(frozen=True)
class BitFeatures:
    """Flip rate and average value of one payload bit."""

    flip_rate: float
    average: float


@dataclass(frozen=True)
class BlockFeatures:
    """Flip rate, average value, distinct-value ratio of a bit block [m, n]."""

    flip_rate: float
    average: float
    distinct_ratio: float


def _check_frames(trace: IdTrace):
    if trace.frame_count < 2:
        raise TooFewFrames(f"id 0x{trace.can_id:X}: {trace.frame_count} frame(s)")


def _flip_rate(values: np.ndarray, valid: np.ndarray, can_id: int) -> float:
    pair_ok = valid[1:] & valid[:-1]
    pairs = int(pair_ok.sum())
    if pairs < 1:
        raise TooFewFrames(f"id 0x{can_id:X}: no adjacent unpadded frame pairs")
    flips = int(((values[1:] != values[:-1]) & pair_ok).sum())
    return flips / pairs


def compute_byte_features(trace: IdTrace, i: int) -> ByteFeatures:
    """Features of payload byte ``i`` (1-based)."""
    _check_frames(trace)
    if not 1 <= i <= trace.width_bytes:
        raise InvalidRange(f"byte index {i} outside 1..{trace.width_bytes}")
    col = trace.byte_matrix[:, i - 1]
    valid = trace.valid_mask[:, i - 1]
    if int(valid.sum()) < 2:
        raise TooFewFrames(f"id 0x{trace.can_id:X}: byte {i} has <2 unpadded rows")
    kept = col[valid]
    return ByteFeatures(
        flip_rate=_flip_rate(col, valid, trace.can_id),
        average=float(kept.mean(dtype=np.float64)),
        distinct_ratio=len(np.unique(kept)) / 256.0,
    )


def compute_bit_features(trace: IdTrace, k: int) -> BitFeatures:
    """Features of payload bit ``k`` (1-based, MSB-first)."""
    _check_frames(trace)
    if not 1 <= k <= trace.width_bits:
        raise InvalidRange(f"bit index {k} outside 1..{trace.width_bits}")
    col = trace.bit_matrix[:, k - 1]
    valid = trace.valid_mask[:, (k - 1) // 8]
    if int(valid.sum()) < 2:
        raise TooFewFrames(f"id 0x{trace.can_id:X}: bit {k} has <2 unpadded rows")
    return BitFeatures(
        flip_rate=_flip_rate(col, valid, trace.can_id),
        average=float(col[valid].mean(dtype=np.float64)),
    )


def block_values(trace: IdTrace, m: int, n: int) -> np.ndarray:
    """Unsigned integer value of bits m..n (MSB-first) for every frame."""
    if m > n:
        raise InvalidRange(f"empty block [{m}, {n}]")
    if not 1 <= m or not n <= trace.width_bits:
        raise InvalidRange(f"block [{m}, {n}] outside 1..{trace.width_bits}")
    if n - m + 1 > 63:
        raise InvalidRange(f"block [{m}, {n}] wider than 63 bits")
    bits = trace.bit_matrix[:, m - 1 : n].astype(np.uint64)
    weights = (np.uint64(1) << np.arange(n - m, -1, -1, dtype=np.uint64)).astype(np.uint64)
    return bits @ weights


def _block_valid(trace: IdTrace, m: int, n: int) -> np.ndarray:
    first_byte = (m - 1) // 8
    last_byte = (n - 1) // 8
    return trace.valid_mask[:, first_byte : last_byte + 1].all(axis=1)


def compute_block_features(trace: IdTrace, m: int, n: int) -> BlockFeatures:
    """Features of the bit block [m, n], both ends inclusive and 1-based."""
    _check_frames(trace)
    values = block_values(trace, m, n)
    valid = _block_valid(trace, m, n)
    if int(valid.sum()) < 2:
        raise TooFewFrames(f"id 0x{trace.can_id:X}: block [{m},{n}] has <2 unpadded rows")
    kept = values[valid]
    return BlockFeatures(
        flip_rate=_flip_rate(values, valid, trace.can_id),
        average=float(kept.mean(dtype=np.float64)),
        distinct_ratio=len(np.unique(kept)) / float(2 ** (n - m + 1)),
    )


def byte_feature_table(trace: IdTrace) -> np.ndarray:
    """All byte features as an (L, 3) array of (flip_rate, average, distinct_ratio)."""
    table = np.empty((trace.width_bytes, 3), dtype=np.float64)
    for i in range(1, trace.width_bytes + 1):
        feats = compute_byte_features(trace, i)
        table[i - 1] = (feats.flip_rate, feats.average, feats.distinct_ratio)
    return table


def bit_feature_table(trace: IdTrace, first: int = 1, last: int | None = None) -> np.ndarray:
    """Bit features for bits first..last as an (n_bits, 2) array of (flip_rate, average)."""
    last = trace.width_bits if last is None else last
    table = np.empty((last - first + 1, 2), dtype=np.float64)
    for k in range(first, last + 1):
        feats = compute_bit_features(trace, k)
        table[k - first] = (feats.flip_rate, feats.average)
    return table
