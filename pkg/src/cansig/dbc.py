"""DBC subset parser/emitter and the bit-numbering conversions.

Supported grammar: VERSION, BO_ (messages), SG_ (signals), CM_ SG_ (signal
comments). Value tables, attributes and multiplexing are out of scope.

DBC bit positions number each byte LSB-first: position p sits in byte p//8 at
in-byte bit p%8 where 7 is the byte's MSB. Big-endian (@0) signals state the
position of their most significant bit and run MSB-first across descending
in-byte bits, hopping to the next byte's bit 7; that order is exactly this
toolkit's sequential index, so big-endian signals occupy a contiguous internal
range. Little-endian (@1) signals state their least significant bit and occupy
ascending positions, which is generally non-contiguous in internal order, so
occupancy is tracked as explicit bit sets.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field

from .errors import NoDefinitions

EXTENDED_FLAG = 0x80000000


def dbc_pos_to_internal(pos: int) -> int:
    """DBC bit position -> internal 1-based MSB-first sequential index."""
    byte, bit = divmod(pos, 8)
    return byte * 8 + (7 - bit) + 1


def internal_to_dbc_pos(k: int) -> int:
    """Internal 1-based sequential index -> DBC bit position."""
    byte, offset = divmod(k - 1, 8)
    return byte * 8 + (7 - offset)


@dataclass
class SignalSpec:
    """One SG_ entry, plus the payload bits it occupies in internal numbering."""

    name: str
    start_bit: int
    length_bits: int
    byte_order: str  # "big" or "little"
    scale: float = 1.0
    offset: float = 0.0
    minimum: float = 0.0
    maximum: float = 0.0
    unit: str = ""
    signed: bool = False
    comment: str | None = None
    category: str | None = None
    descriptive: str | None = None

    def occupied_bits(self) -> frozenset[int]:
        if self.byte_order == "big":
            first = dbc_pos_to_internal(self.start_bit)
            return frozenset(range(first, first + self.length_bits))
        return frozenset(
            dbc_pos_to_internal(p)
            for p in range(self.start_bit, self.start_bit + self.length_bits)
        )

    def internal_range(self) -> tuple[int, int] | None:
        """(m, n) when the occupied bits are contiguous, else None."""
        bits = sorted(self.occupied_bits())
        if bits[-1] - bits[0] + 1 == len(bits):
            return bits[0], bits[-1]
        return None


@dataclass
class Message:
    can_id: int
    name: str
    dlc: int
    extended: bool = False
    signals: list[SignalSpec] = field(default_factory=list)


@dataclass
class GroundTruth:
    messages: dict[int, Message] = field(default_factory=dict)
    provenance: str = "<memory>"
    warnings: list[str] = field(default_factory=list)

    def signals(self, can_id: int) -> list[SignalSpec]:
        return self.messages[can_id].signals if can_id in self.messages else []


_BO_RE = re.compile(r"^BO_\s+(\d+)\s+(\w+)\s*:\s*(\d+)\s+(\S+)")
_SG_RE = re.compile(
    r'^\s*SG_\s+(\w+)\s*:\s*(\d+)\|(\d+)@([01])([+-])\s*'
    r'\(\s*([^,]+?)\s*,\s*([^)]+?)\s*\)\s*'
    r'\[\s*([^|]+?)\s*\|\s*([^\]]+?)\s*\]\s*'
    r'"([^"]*)"'
)
_CM_RE = re.compile(r'^CM_\s+SG_\s+(\d+)\s+(\w+)\s+"((?:[^"\\]|\\.)*)"\s*;')


def parse_dbc(text: str, provenance: str = "<memory>") -> GroundTruth:
    """Parse BO_/SG_/CM_ definitions; unparseable lines become warnings."""
    truth = GroundTruth(provenance=provenance)
    current: Message | None = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line.startswith(("BO_ ", "SG_", "CM_ SG_")):
            continue  # tolerate VERSION, BU_, and other sections
        if line.startswith("BO_ "):
            match = _BO_RE.match(line)
            if not match:
                truth.warnings.append(f"{provenance}:{lineno}: bad BO_ line")
                current = None
                continue
            raw_id = int(match.group(1))
            current = Message(
                can_id=raw_id & ~EXTENDED_FLAG,
                name=match.group(2),
                dlc=int(match.group(3)),
                extended=bool(raw_id & EXTENDED_FLAG),
            )
            truth.messages[current.can_id] = current
        elif line.startswith("SG_"):
            match = _SG_RE.match(line)
            if not match or current is None:
                truth.warnings.append(f"{provenance}:{lineno}: bad or orphaned SG_ line")
                continue
            try:
                spec = SignalSpec(
                    name=match.group(1),
                    start_bit=int(match.group(2)),
                    length_bits=int(match.group(3)),
                    byte_order="big" if match.group(4) == "0" else "little",
                    signed=match.group(5) == "-",
                    scale=float(match.group(6)),
                    offset=float(match.group(7)),
                    minimum=float(match.group(8)),
                    maximum=float(match.group(9)),
                    unit=match.group(10),
                )
            except ValueError:
                truth.warnings.append(f"{provenance}:{lineno}: bad SG_ numbers")
                continue
            if spec.length_bits < 1 or spec.scale == 0:
                truth.warnings.append(f"{provenance}:{lineno}: invalid SG_ fields")
                continue
            current.signals.append(spec)
        elif line.startswith("CM_ SG_"):
            match = _CM_RE.match(line)
            if not match:
                truth.warnings.append(f"{provenance}:{lineno}: bad CM_ line")
                continue
            msg_id = int(match.group(1)) & ~EXTENDED_FLAG
            if msg_id in truth.messages:
                for spec in truth.messages[msg_id].signals:
                    if spec.name == match.group(2):
                        spec.comment = match.group(3)
                        break
    if not truth.messages:
        raise NoDefinitions(f"{provenance}: no BO_ definitions found")
    _check_overlaps(truth)
    return truth


def _check_overlaps(truth: GroundTruth):
    for can_id, message in truth.messages.items():
        seen: dict[int, str] = {}
        for spec in message.signals:
            for bit in spec.occupied_bits():
                if bit in seen:
                    truth.warnings.append(
                        f"id 0x{can_id:X}: signals {seen[bit]!r} and {spec.name!r} overlap at bit {bit}"
                    )
                    break
                seen[bit] = spec.name


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def dump_dbc(truth: GroundTruth, version: str = "cansig") -> str:
    """Serialize messages/signals to DBC text; inverse of :func:`parse_dbc`."""
    lines = [f'VERSION "{version}"', ""]
    comments: list[str] = []
    for can_id in sorted(truth.messages):
        message = truth.messages[can_id]
        raw_id = can_id | (EXTENDED_FLAG if message.extended else 0)
        lines.append(f"BO_ {raw_id} {message.name}: {message.dlc} Vector__XXX")
        for spec in message.signals:
            order = "0" if spec.byte_order == "big" else "1"
            sign = "-" if spec.signed else "+"
            lines.append(
                f" SG_ {spec.name} : {spec.start_bit}|{spec.length_bits}@{order}{sign}"
                f" ({_num(spec.scale)},{_num(spec.offset)})"
                f' [{_num(spec.minimum)}|{_num(spec.maximum)}] "{spec.unit}" Vector__XXX'
            )
            if spec.comment:
                comments.append(f'CM_ SG_ {raw_id} {spec.name} "{spec.comment}";')
        lines.append("")
    lines.extend(comments)
    return "\n".join(lines) + "\n"


def emit_dbc(
    inferred: dict[int, list],
    payload_bytes: dict[int, int] | None = None,
    extended_ids: set[int] | None = None,
) -> str:
    """Serialize inferred slices to DBC text.

    ``inferred`` maps can_id to SignalSlice-like objects (attributes m, n,
    label, descriptive_label). Unused slices are omitted. Signal names are
    ``SIG_<m>_<n>_<label>``; descriptive labels ride along as CM_ comments.
    The output round-trips through :func:`parse_dbc`.
    """
    doc = GroundTruth(provenance="inferred")
    for can_id in sorted(inferred):
        width = payload_bytes.get(can_id, 8) if payload_bytes else 8
        message = Message(
            can_id=can_id,
            name=f"MSG_{can_id:03X}",
            dlc=width,
            extended=bool(extended_ids and can_id in extended_ids),
        )
        for item in sorted(inferred[can_id], key=lambda s: s.m):
            if not item.label or item.label == "Unused":
                continue
            length = item.n - item.m + 1
            message.signals.append(
                SignalSpec(
                    name=f"SIG_{item.m}_{item.n}_{item.label}",
                    start_bit=internal_to_dbc_pos(item.m),
                    length_bits=length,
                    byte_order="big",
                    maximum=float((1 << length) - 1),
                    comment=item.descriptive_label,
                )
            )
        doc.messages[can_id] = message
    return dump_dbc(doc, version="cansig inferred signal map")


def slices_from_dbc(truth: GroundTruth):
    """Recover per-ID (m, n, label, descriptive) tuples from an inferred DBC.

    Only signals named by :func:`emit_dbc` (``SIG_<m>_<n>_<label>``) carry a
    recoverable label; anything else gets label None.
    """
    from .clustering import SignalSlice

    result: dict[int, list[SignalSlice]] = {}
    for can_id, message in truth.messages.items():
        out = []
        for spec in message.signals:
            rng = spec.internal_range()
            if rng is None:
                continue
            label = None
            parts = spec.name.split("_")
            if len(parts) == 4 and parts[0] == "SIG":
                label = parts[3]
            out.append(
                SignalSlice(
                    can_id=can_id,
                    m=rng[0],
                    n=rng[1],
                    label=label,
                    descriptive_label=spec.comment,
                )
            )
        result[can_id] = sorted(out, key=lambda s: s.m)
    return result


def load_annotations(text: str) -> dict[str, tuple[str, str | None]]:
    """Read a category sidecar CSV: signal_name, category[, descriptive].

    A header row is optional; it is detected by the literal column name
    ``signal_name`` or ``category`` in the first row.
    """
    rows = list(csv.reader(io.StringIO(text)))
    annotations: dict[str, tuple[str, str | None]] = {}
    for index, row in enumerate(rows):
        if not row or not row[0].strip():
            continue
        cells = [c.strip() for c in row]
        if index == 0 and ("signal_name" in cells or "category" in cells):
            continue
        descriptive = cells[2] if len(cells) > 2 and cells[2] else None
        annotations[cells[0]] = (cells[1], descriptive)
    return annotations


def dump_annotations(annotations: dict[str, tuple[str, str | None]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["signal_name", "category", "descriptive"])
    for name in sorted(annotations):
        category, descriptive = annotations[name]
        writer.writerow([name, category, descriptive or ""])
    return out.getvalue()


def apply_annotations(truth: GroundTruth, annotations: dict[str, tuple[str, str | None]]):
    """Attach sidecar categories and descriptive names to parsed signals."""
    for message in truth.messages.values():
        for spec in message.signals:
            if spec.name in annotations:
                spec.category, spec.descriptive = annotations[spec.name]
