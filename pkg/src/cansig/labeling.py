"""General labels: Unused, Switch, Dynamic, Verification.

A slice's labeling parameter is theta = flip_rate * distinct_ratio. The
Switch/Dynamic threshold eps0 is derived from the data: positive theta values
are sorted and split at the largest relative gap (max ratio between adjacent
distinct values), eps0 being the arithmetic midpoint of that gap. Blocks whose
flip rate reaches 0.99 count as Verification rather than Dynamic, tolerating
counters that occasionally fail to toggle in the recorded window.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .clustering import SignalSlice
from .errors import NoActiveSignals
from .features import BlockFeatures

VERIFICATION_FLOOR = 0.99


class GeneralLabel(str, enum.Enum):
    UNUSED = "Unused"
    SWITCH = "Switch"
    DYNAMIC = "Dynamic"
    VERIFICATION = "Verification"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


@dataclass
class LabelingContext:
    """Derived threshold plus the per-slice thetas it came from."""

    thetas: list[float]
    eps0: float
    verification_floor: float = VERIFICATION_FLOOR


def compute_theta(features: BlockFeatures) -> float:
    """Labeling parameter: block flip rate times distinct-value ratio."""
    return features.flip_rate * features.distinct_ratio


def derive_threshold(thetas) -> float:
    """Split positive thetas into two groups at the largest relative gap.

    Returns the midpoint of the winning gap. With a single distinct positive
    value the threshold equals that value (everything at or below it labels
    Switch). Raises :class:`NoActiveSignals` when no theta is positive.
    """
    distinct = sorted({float(t) for t in thetas if t > 0})
    if not distinct:
        raise NoActiveSignals("all labeling parameters are zero")
    if len(distinct) == 1:
        return distinct[0]
    best_pos = 0
    best_ratio = 0.0
    for pos in range(len(distinct) - 1):
        ratio = distinct[pos + 1] / distinct[pos]
        if ratio > best_ratio:
            best_ratio = ratio
            best_pos = pos
    return (distinct[best_pos] + distinct[best_pos + 1]) / 2.0


def assign_general_label(theta: float, features: BlockFeatures, eps0: float) -> GeneralLabel:
    """Total, exclusive label assignment; theta == eps0 resolves to Switch.

    theta is flip_rate * distinct_ratio and distinct_ratio is strictly
    positive, so theta == 0 exactly when the block never changed.
    """
    if theta <= 0:
        return GeneralLabel.UNUSED
    if theta <= eps0:
        return GeneralLabel.SWITCH
    if features.flip_rate < VERIFICATION_FLOOR:
        return GeneralLabel.DYNAMIC
    return GeneralLabel.VERIFICATION


def label_slices(slices: list[SignalSlice], eps0: float | None = None) -> LabelingContext:
    """Label every slice in place, deriving eps0 from the pooled trace unless given.

    The threshold is shared across all CAN IDs so sparse IDs inherit a stable
    split. When every slice has theta == 0 the whole trace is static: all
    slices label Unused and eps0 falls back to 0.5 (any value works, nothing
    is above it).
    """
    for item in slices:
        item.theta = compute_theta(item.features)
    if eps0 is None:
        try:
            eps0 = derive_threshold([item.theta for item in slices])
        except NoActiveSignals:
            eps0 = 0.5
    for item in slices:
        item.label = assign_general_label(item.theta, item.features, eps0).value
    return LabelingContext(thetas=[item.theta for item in slices], eps0=eps0)
