"""Trace ingestion: candump/CSV parsing, grouping by CAN ID, payload matrices.

Bit numbering convention used across the toolkit: payload bits are indexed
1..8*L where bit 1 is the most significant bit of byte 1. Bit k therefore
lives in byte (k-1)//8 + 1 and equals MSB-first bit (k-1)%8 of that byte.
This matches DBC big-endian sequential order; conversions from DBC start-bit
conventions happen in :mod:`cansig.dbc`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTrace, MissingColumn

STANDARD_ID_MAX = 0x7FF
EXTENDED_ID_MAX = 0x1FFFFFFF


@dataclass(frozen=True)
class Frame:
    """One timestamped CAN frame."""

    timestamp: float
    can_id: int
    dlc: int
    payload: bytes
    extended: bool = False

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        limit = EXTENDED_ID_MAX if self.extended else STANDARD_ID_MAX
        if not 0 <= self.can_id <= limit:
            raise ValueError(f"CAN id 0x{self.can_id:X} out of range")
        if not 0 <= self.dlc <= 8:
            raise ValueError(f"dlc {self.dlc} out of range")
        if len(self.payload) != self.dlc:
            raise ValueError("payload length does not match dlc")


@dataclass
class RawTrace:
    """All frames parsed from one log, in file order."""

    frames: list[Frame]
    source: str = "<memory>"
    warnings: list[str] = field(default_factory=list)


@dataclass
class IdTrace:
    """Frames of a single CAN ID as byte-level and bit-level matrices.

    ``byte_matrix`` has one row per frame and one column per payload byte
    (width = widest DLC seen for this ID, shorter frames right-padded with
    0x00). ``bit_matrix`` is its MSB-first expansion; ``valid_mask`` is False
    on padded byte positions so feature code can drop them.
    """

    can_id: int
    timestamps: np.ndarray
    byte_matrix: np.ndarray
    bit_matrix: np.ndarray
    valid_mask: np.ndarray
    extended: bool = False

    @property
    def frame_count(self) -> int:
        return self.byte_matrix.shape[0]

    @property
    def width_bytes(self) -> int:
        return self.byte_matrix.shape[1]

    @property
    def width_bits(self) -> int:
        return 8 * self.byte_matrix.shape[1]

    @property
    def usable_for_features(self) -> bool:
        return self.frame_count >= 2


_CANDUMP_RE = re.compile(
    r"^\s*\((?P<ts>\d+(?:\.\d+)?)\)\s+(?P<iface>\S+)\s+"
    r"(?P<id>[0-9A-Fa-f]{1,8})#(?P<data>[0-9A-Fa-f \t]*)\s*$"
)


def _parse_hex_payload(text: str) -> bytes | None:
    digits = text.replace(" ", "").replace("\t", "")
    if len(digits) % 2 != 0 or len(digits) > 16:
        return None
    return bytes.fromhex(digits) if digits else b""


def parse_candump(text: str, source: str = "<memory>") -> RawTrace:
    """Parse candump-style log content: ``(ts) iface ID#HEXDATA`` per line.

    Hex data is case-insensitive, with or without byte separators. Invalid
    lines are collected as warnings; a log with zero valid lines raises
    :class:`EmptyTrace`.
    """
    frames: list[Frame] = []
    warnings: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        match = _CANDUMP_RE.match(line)
        if not match:
            warnings.append(f"{source}:{lineno}: unparseable line")
            continue
        payload = _parse_hex_payload(match.group("data"))
        if payload is None:
            warnings.append(f"{source}:{lineno}: bad hex payload")
            continue
        can_id = int(match.group("id"), 16)
        extended = len(match.group("id")) > 3 or can_id > STANDARD_ID_MAX
        if can_id > EXTENDED_ID_MAX:
            warnings.append(f"{source}:{lineno}: CAN id out of range")
            continue
        frames.append(
            Frame(
                timestamp=float(match.group("ts")),
                can_id=can_id,
                dlc=len(payload),
                payload=payload,
                extended=extended,
            )
        )
    if not frames:
        raise EmptyTrace(f"{source}: no valid frames")
    return RawTrace(frames=frames, source=source, warnings=warnings)


def serialize_candump(trace: RawTrace, iface: str = "can0") -> str:
    """Render frames back to candump text. Inverse of :func:`parse_candump`."""
    lines = []
    for frame in trace.frames:
        ident = f"{frame.can_id:08X}" if frame.extended else f"{frame.can_id:03X}"
        lines.append(f"({frame.timestamp:.6f}) {iface} {ident}#{frame.payload.hex().upper()}")
    return "\n".join(lines) + "\n"


DEFAULT_CSV_COLUMNS = {"timestamp": "timestamp", "id": "id", "dlc": "dlc", "data": "data"}


def parse_csv(
    text: str,
    column_map: dict[str, str] | None = None,
    source: str = "<memory>",
) -> RawTrace:
    """Parse a CSV trace with a header row.

    ``column_map`` maps the logical names (timestamp, id, dlc, data) to the
    actual header names. IDs are hex (0x prefix optional); data is hex with
    optional separators. Rows whose data length disagrees with the stated dlc
    are skipped with a warning.
    """
    import csv as _csv
    import io

    colmap = dict(DEFAULT_CSV_COLUMNS)
    if column_map:
        colmap.update(column_map)
    reader = _csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise EmptyTrace(f"{source}: empty CSV")
    for logical, name in colmap.items():
        if name not in reader.fieldnames:
            raise MissingColumn(f"{source}: missing column {name!r} (for {logical})")

    frames: list[Frame] = []
    warnings: list[str] = []
    for lineno, row in enumerate(reader, start=2):
        try:
            ts = float(row[colmap["timestamp"]])
            raw_id = row[colmap["id"]].strip()
            can_id = int(raw_id, 16)
            dlc = int(row[colmap["dlc"]])
            payload = _parse_hex_payload(row[colmap["data"]] or "")
        except (TypeError, ValueError, AttributeError):
            warnings.append(f"{source}:{lineno}: unparseable row")
            continue
        if payload is None or len(payload) != dlc or not 0 <= dlc <= 8:
            warnings.append(f"{source}:{lineno}: dlc/data mismatch")
            continue
        extended = can_id > STANDARD_ID_MAX
        if can_id > EXTENDED_ID_MAX or ts < 0:
            warnings.append(f"{source}:{lineno}: field out of range")
            continue
        frames.append(Frame(ts, can_id, dlc, payload, extended))
    if not frames:
        raise EmptyTrace(f"{source}: no valid rows")
    return RawTrace(frames=frames, source=source, warnings=warnings)


def group_by_id(trace: RawTrace) -> dict[int, IdTrace]:
    """Split a raw trace into per-ID traces with byte/bit matrices.

    Frame order within an ID is made non-decreasing in time by a stable sort,
    so interleaved-channel logs are safe. Frames shorter than the widest DLC
    of their ID are right-padded with 0x00 and masked out of ``valid_mask``.
    """
    by_id: dict[int, list[Frame]] = {}
    for frame in trace.frames:
        by_id.setdefault(frame.can_id, []).append(frame)

    result: dict[int, IdTrace] = {}
    for can_id in sorted(by_id):
        frames = sorted(by_id[can_id], key=lambda f: f.timestamp)
        width = max(f.dlc for f in frames)
        count = len(frames)
        byte_matrix = np.zeros((count, width), dtype=np.uint8)
        valid_mask = np.zeros((count, width), dtype=bool)
        timestamps = np.empty(count, dtype=np.float64)
        for row, frame in enumerate(frames):
            timestamps[row] = frame.timestamp
            if frame.dlc:
                byte_matrix[row, : frame.dlc] = np.frombuffer(frame.payload, dtype=np.uint8)
            valid_mask[row, : frame.dlc] = True
        if width:
            bit_matrix = np.unpackbits(byte_matrix, axis=1)
        else:
            bit_matrix = np.zeros((count, 0), dtype=np.uint8)
        result[can_id] = IdTrace(
            can_id=can_id,
            timestamps=timestamps,
            byte_matrix=byte_matrix,
            bit_matrix=bit_matrix,
            valid_mask=valid_mask,
            extended=any(f.extended for f in frames),
        )
    return result
