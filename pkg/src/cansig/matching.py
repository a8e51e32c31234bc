"""Descriptive labeling of Dynamic slices by DTW against OBD templates.

Both series are z-normalized before alignment by default because raw slice
integers carry unknown scale and offset relative to physical units. The DTW
cost is the squared pointwise difference; the distance is the square root of
the cheapest boundary-anchored monotone path sum. Long candidates are
uniformly downsampled to bound the quadratic alignment cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import SignalSlice
from .errors import NoTemplates, SeriesTooShort
from .features import block_values
from .obd import Template
from .trace import IdTrace

DEFAULT_MAX_SERIES = 5000


@dataclass
class CandidateSeries:
    """Per-frame integer values of one slice, in frame order (length = T_C)."""

    can_id: int
    m: int
    n: int
    values: np.ndarray
    timestamps: np.ndarray


@dataclass
class DtwResult:
    distance: float
    matched_label: str | None
    per_template: dict[str, float] = field(default_factory=dict)
    rejected: bool = False


def serialize_signal(trace: IdTrace, sig_slice: SignalSlice) -> CandidateSeries:
    """Value of bits m..n (MSB-first) for every frame of the ID."""
    return CandidateSeries(
        can_id=trace.can_id,
        m=sig_slice.m,
        n=sig_slice.n,
        values=block_values(trace, sig_slice.m, sig_slice.n).astype(np.float64),
        timestamps=trace.timestamps.copy(),
    )


def znorm(series: np.ndarray) -> np.ndarray:
    """Zero-mean unit-variance copy; zero-variance series map to all zeros."""
    series = np.asarray(series, dtype=np.float64)
    std = series.std()
    if std == 0:
        return np.zeros_like(series)
    return (series - series.mean()) / std


def downsample(series: np.ndarray, max_points: int) -> np.ndarray:
    """Uniform downsampling to at most max_points via equal-width bin means.

    Averaging (rather than striding) also knocks down per-frame jitter, which
    the alignment would otherwise chase.
    """
    if len(series) <= max_points:
        return series
    edges = np.linspace(0, len(series), max_points + 1).astype(np.int64)
    sums = np.add.reduceat(series.astype(np.float64), edges[:-1])
    return sums / np.diff(edges)


def _band_mask(y: int, z: int, band: int | None) -> np.ndarray | None:
    if band is None:
        return None
    # Sakoe-Chiba band around the length-scaled diagonal, in points of the
    # second series. Width below 1 would disconnect unequal-length corners.
    width = max(int(band), 1)
    rows = np.arange(y)[:, None]
    cols = np.arange(z)[None, :]
    center = rows * ((z - 1) / (y - 1)) if y > 1 else cols * 0.0
    return np.abs(cols - center) <= width


def _accumulate(s: np.ndarray, e: np.ndarray, band: int | None) -> np.ndarray:
    """Full accumulated-cost matrix, filled along anti-diagonals."""
    y, z = len(s), len(e)
    cost = (s[:, None] - e[None, :]) ** 2
    mask = _band_mask(y, z, band)
    if mask is not None:
        cost = np.where(mask, cost, np.inf)
    acc = np.full((y, z), np.inf)
    acc[0, 0] = cost[0, 0]
    for diag in range(1, y + z - 1):
        lo = max(0, diag - z + 1)
        hi = min(y - 1, diag)
        i = np.arange(lo, hi + 1)
        j = diag - i
        best = np.full(len(i), np.inf)
        up = i >= 1
        if up.any():
            best[up] = acc[i[up] - 1, j[up]]
        left = j >= 1
        if left.any():
            best[left] = np.minimum(best[left], acc[i[left], j[left] - 1])
        both = up & left
        if both.any():
            best[both] = np.minimum(best[both], acc[i[both] - 1, j[both] - 1])
        acc[i, j] = cost[i, j] + best
    return acc


def dtw_distance(series_a, series_b, band: int | None = None) -> float:
    """DTW distance: sqrt of the minimal accumulated squared-difference path."""
    s = np.asarray(series_a, dtype=np.float64)
    e = np.asarray(series_b, dtype=np.float64)
    if len(s) < 2 or len(e) < 2:
        raise SeriesTooShort(f"lengths {len(s)} and {len(e)}; need >= 2 each")
    return float(np.sqrt(_accumulate(s, e, band)[-1, -1]))


def dtw_alignment(series_a, series_b, band: int | None = None):
    """Distance plus one optimal warping path as 0-based (a, b) pairs."""
    s = np.asarray(series_a, dtype=np.float64)
    e = np.asarray(series_b, dtype=np.float64)
    if len(s) < 2 or len(e) < 2:
        raise SeriesTooShort(f"lengths {len(s)} and {len(e)}; need >= 2 each")
    acc = _accumulate(s, e, band)
    i, j = len(s) - 1, len(e) - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        choices = []
        if i > 0 and j > 0:
            choices.append((acc[i - 1, j - 1], (i - 1, j - 1)))
        if i > 0:
            choices.append((acc[i - 1, j], (i - 1, j)))
        if j > 0:
            choices.append((acc[i, j - 1], (i, j - 1)))
        _, (i, j) = min(choices, key=lambda c: c[0])
        path.append((i, j))
    path.reverse()
    return float(np.sqrt(acc[-1, -1])), path


def match_label(
    candidate: CandidateSeries,
    templates: dict[str, Template],
    normalize: bool = True,
    band: int | None = None,
    max_points: int = DEFAULT_MAX_SERIES,
    max_distance: float | None = None,
) -> DtwResult:
    """Assign the template label with the smallest DTW distance.

    Ties break toward the lexicographically smaller label. When
    ``max_distance`` is set and even the best template exceeds it, the result
    is flagged rejected and carries no label.
    """
    if not templates:
        raise NoTemplates("no templates to match against")
    series = downsample(candidate.values, max_points)
    if normalize:
        series = znorm(series)
    per_template: dict[str, float] = {}
    for label in sorted(templates):
        reference = templates[label].values
        if normalize:
            reference = znorm(reference)
        per_template[label] = dtw_distance(series, reference, band=band)
    matched = min(sorted(per_template), key=per_template.get)
    distance = per_template[matched]
    if max_distance is not None and distance > max_distance:
        return DtwResult(distance=distance, matched_label=None, per_template=per_template, rejected=True)
    return DtwResult(distance=distance, matched_label=matched, per_template=per_template)
