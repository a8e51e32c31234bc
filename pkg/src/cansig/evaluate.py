"""Score inferred slicing and labeling against DBC ground truth.

All three headline metrics are micro-averages (summed numerators over summed
denominators) so multi-ID results stay in [0, 1]:

* slicing accuracy: a ground-truth signal bit counts when the inferred slice
  containing it has exactly the signal's boundaries;
* slicing coverage: a ground-truth signal bit counts when its inferred slice
  lies fully inside one ground-truth signal;
* labeling accuracy: an inferred slice counts when its label equals the
  majority label of the ground-truth bits it spans (bits outside any
  ground-truth signal count as Unused).

Only CAN IDs present on both sides are evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .clustering import SignalSlice
from .dbc import GroundTruth, SignalSpec
from .errors import MissingAnnotations, NoOverlap


@dataclass
class Ratio:
    numerator: int = 0
    denominator: int = 0

    @property
    def value(self) -> float | None:
        return self.numerator / self.denominator if self.denominator else None

    def add(self, hit: bool):
        self.numerator += bool(hit)
        self.denominator += 1

    def merge(self, other: "Ratio"):
        self.numerator += other.numerator
        self.denominator += other.denominator


@dataclass
class Breakdown:
    accuracy: Ratio = field(default_factory=Ratio)
    coverage: Ratio = field(default_factory=Ratio)
    label_general: Ratio = field(default_factory=Ratio)
    label_descriptive: Ratio = field(default_factory=Ratio)


@dataclass
class EvalReport:
    zeta: float | None
    varpi: float | None
    xi_general: float | None
    xi_descriptive: float | None
    per_id: dict[int, Breakdown]
    per_type: dict[str, Breakdown]
    per_length: dict[int, Breakdown]
    totals: Breakdown
    evaluated_ids: list[int]
    truth_signals: int
    inferred_slices: int

    def to_dict(self) -> dict:
        def ratio(r: Ratio):
            return {"num": r.numerator, "den": r.denominator, "value": r.value}

        def breakdown(b: Breakdown):
            return {
                "accuracy": ratio(b.accuracy),
                "coverage": ratio(b.coverage),
                "label_general": ratio(b.label_general),
                "label_descriptive": ratio(b.label_descriptive),
            }

        return {
            "zeta": self.zeta,
            "varpi": self.varpi,
            "xi_general": self.xi_general,
            "xi_descriptive": self.xi_descriptive,
            "evaluated_ids": [f"0x{i:X}" for i in self.evaluated_ids],
            "truth_signals": self.truth_signals,
            "inferred_slices": self.inferred_slices,
            "per_id": {f"0x{i:X}": breakdown(b) for i, b in sorted(self.per_id.items())},
            "per_type": {k: breakdown(b) for k, b in sorted(self.per_type.items())},
            "per_length": {str(k): breakdown(b) for k, b in sorted(self.per_length.items())},
            "totals": breakdown(self.totals),
        }


def _majority(votes: dict[str, int], order: dict[str, int]) -> str:
    # Highest bit count wins; ties go to the label seen at the lowest bit.
    best = max(votes.values())
    tied = [label for label, count in votes.items() if count == best]
    return min(tied, key=lambda label: order[label])


def slicing_accuracy(inferred: dict[int, list[SignalSlice]], truth: GroundTruth) -> float:
    """Fraction of ground-truth signal bits whose slice has exact boundaries."""
    return evaluate(inferred, truth, mode="slicing").zeta


def slicing_coverage(inferred: dict[int, list[SignalSlice]], truth: GroundTruth) -> float:
    """Fraction of ground-truth signal bits whose slice sits inside one signal."""
    return evaluate(inferred, truth, mode="slicing").varpi


def labeling_accuracy(
    inferred: dict[int, list[SignalSlice]], truth: GroundTruth, mode: str = "general"
) -> float | None:
    """Fraction of labeled slices matching the majority ground-truth label."""
    if mode not in ("general", "descriptive"):
        raise ValueError(f"labeling mode must be general or descriptive, not {mode!r}")
    report = evaluate(inferred, truth, mode=mode)
    return report.xi_general if mode == "general" else report.xi_descriptive


def evaluate(
    inferred: dict[int, list[SignalSlice]],
    truth: GroundTruth,
    mode: str = "auto",
) -> EvalReport:
    """Compare inferred slices with annotated ground truth.

    ``mode`` is one of slicing, general, descriptive, both, auto. General and
    descriptive label scoring need sidecar categories attached to the truth
    (:func:`cansig.dbc.apply_annotations`); mode auto scores whatever the
    annotations allow.
    """
    if mode not in ("slicing", "general", "descriptive", "both", "auto"):
        raise ValueError(f"unknown eval mode {mode!r}")
    shared = sorted(set(inferred) & set(truth.messages))
    if not shared:
        raise NoOverlap("inferred and ground-truth CAN ID sets are disjoint")

    annotated = any(
        spec.category is not None
        for can_id in shared
        for spec in truth.signals(can_id)
    )
    want_general = mode in ("general", "both") or (mode == "auto" and annotated)
    want_descriptive = mode in ("descriptive", "both", "auto")
    if mode in ("general", "both") and not annotated:
        raise MissingAnnotations("general labeling accuracy needs a category sidecar")

    per_id: dict[int, Breakdown] = {}
    per_type: dict[str, Breakdown] = {}
    per_length: dict[int, Breakdown] = {}
    totals = Breakdown()
    truth_signal_count = 0
    inferred_slice_count = 0

    for can_id in shared:
        id_stats = per_id.setdefault(can_id, Breakdown())
        signals: list[SignalSpec] = truth.signals(can_id)
        truth_signal_count += len(signals)
        slices = sorted(inferred[can_id], key=lambda s: s.m)
        inferred_slice_count += len(slices)

        if want_general:
            missing = [s.name for s in signals if s.category is None]
            if missing:
                raise MissingAnnotations(
                    f"id 0x{can_id:X}: signals without category annotation: {', '.join(missing)}"
                )

        slice_infos = [(s, frozenset(range(s.m, s.n + 1))) for s in slices]
        bit_to_slice: dict[int, int] = {}
        for index, (_s, bits) in enumerate(slice_infos):
            for bit in bits:
                bit_to_slice[bit] = index
        signal_bits = [(spec, spec.occupied_bits()) for spec in signals]

        # Slicing metrics walk ground-truth signal bits.
        for spec, bits in signal_bits:
            length = len(bits)
            len_stats = per_length.setdefault(length, Breakdown())
            type_key = spec.category or "unannotated"
            type_stats = per_type.setdefault(type_key, Breakdown())
            for bit in sorted(bits):
                owner = bit_to_slice.get(bit)
                owner_bits = slice_infos[owner][1] if owner is not None else None
                exact = owner_bits == bits
                contained = owner_bits is not None and owner_bits <= bits
                for stats in (totals, id_stats, len_stats, type_stats):
                    stats.accuracy.add(exact)
                    stats.coverage.add(contained)

        # Labeling metrics walk inferred slices.
        bit_category: dict[int, str] = {}
        bit_descriptive: dict[int, str | None] = {}
        for spec, bits in signal_bits:
            for bit in bits:
                bit_category[bit] = spec.category or "unannotated"
                bit_descriptive[bit] = spec.descriptive
        for s, s_bits in slice_infos:
            bits = sorted(s_bits)
            if want_general and s.label is not None:
                votes: dict[str, int] = {}
                first_seen: dict[str, int] = {}
                for bit in bits:
                    label = bit_category.get(bit, "Unused")
                    votes[label] = votes.get(label, 0) + 1
                    first_seen.setdefault(label, bit)
                expected = _majority(votes, first_seen)
                hit = s.label == expected
                type_stats = per_type.setdefault(expected, Breakdown())
                for stats in (totals, id_stats, type_stats):
                    stats.label_general.add(hit)
            if want_descriptive and s.descriptive_label is not None:
                votes = {}
                first_seen = {}
                for bit in bits:
                    name = bit_descriptive.get(bit)
                    if name:
                        votes[name] = votes.get(name, 0) + 1
                        first_seen.setdefault(name, bit)
                if not votes:
                    continue  # nothing to grade against
                expected = _majority(votes, first_seen)
                hit = s.descriptive_label == expected
                for stats in (totals, id_stats):
                    stats.label_descriptive.add(hit)

    return EvalReport(
        zeta=totals.accuracy.value,
        varpi=totals.coverage.value,
        xi_general=totals.label_general.value if want_general else None,
        xi_descriptive=totals.label_descriptive.value if totals.label_descriptive.denominator else None,
        per_id=per_id,
        per_type=per_type,
        per_length=per_length,
        totals=totals,
        evaluated_ids=shared,
        truth_signals=truth_signal_count,
        inferred_slices=inferred_slice_count,
    )
