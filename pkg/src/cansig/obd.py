"""OBD-II mode-01 response decoding and template assembly.

Positive responses ride on CAN IDs 0x7E8..0x7EF with payload
``[len, 0x41, pid, data...]``. The decodable request set and its SAE J1979
conversion formulas:

====  ======================  ==================
PID   label                   physical value
====  ======================  ==================
0x04  EngineLoad              A * 100 / 255  (%)
0x0C  EngineSpeed             (256A + B) / 4 (rpm)
0x0D  VehicleSpeed            A (km/h)
0x11  ThrottlePosition        A * 100 / 255  (%)
0x45  ThrottlePosition        A * 100 / 255  (%)
0x47  ThrottlePosition        A * 100 / 255  (%)
0x48  ThrottlePosition        A * 100 / 255  (%)
0x49  ThrottlePosition        A * 100 / 255  (%)
0x4A  ThrottlePosition        A * 100 / 255  (%)
0x4B  ThrottlePosition        A * 100 / 255  (%)
====  ======================  ==================

The throttle-related PIDs collapse into a single ThrottlePosition template.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ShortData, UnsupportedPid
from .trace import RawTrace

log = logging.getLogger(__name__)

RESPONSE_ID_FIRST = 0x7E8
RESPONSE_ID_LAST = 0x7EF
POSITIVE_MODE_01 = 0x41

#: pid -> (template label, data bytes consumed)
PID_TABLE: dict[int, tuple[str, int]] = {
    0x04: ("EngineLoad", 1),
    0x0C: ("EngineSpeed", 2),
    0x0D: ("VehicleSpeed", 1),
    0x11: ("ThrottlePosition", 1),
    0x45: ("ThrottlePosition", 1),
    0x47: ("ThrottlePosition", 1),
    0x48: ("ThrottlePosition", 1),
    0x49: ("ThrottlePosition", 1),
    0x4A: ("ThrottlePosition", 1),
    0x4B: ("ThrottlePosition", 1),
}


@dataclass(frozen=True)
class ObdSample:
    timestamp: float
    pid: int
    value: float


@dataclass
class Template:
    """Time series of one physical quantity, strictly increasing in time."""

    label: str
    timestamps: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class ObdExtraction:
    samples: list[ObdSample] = field(default_factory=list)
    skipped_unsupported: int = 0
    malformed: int = 0


def decode_pid(pid: int, data: bytes) -> float:
    """Physical value of a mode-01 response per the table above."""
    if pid not in PID_TABLE:
        raise UnsupportedPid(f"pid 0x{pid:02X}")
    _, need = PID_TABLE[pid]
    if len(data) < need:
        raise ShortData(f"pid 0x{pid:02X}: got {len(data)} data byte(s), need {need}")
    if pid == 0x0C:
        return (256 * data[0] + data[1]) / 4.0
    if pid == 0x0D:
        return float(data[0])
    return data[0] * 100.0 / 255.0


def pid_label(pid: int) -> str:
    if pid not in PID_TABLE:
        raise UnsupportedPid(f"pid 0x{pid:02X}")
    return PID_TABLE[pid][0]


def extract_obd_responses(trace: RawTrace) -> ObdExtraction:
    """Pull decodable mode-01 samples out of a raw trace.

    Unsupported PIDs and malformed responses are counted, never fatal.
    Single-frame (non ISO-TP) responses only.
    """
    result = ObdExtraction()
    for frame in trace.frames:
        if not RESPONSE_ID_FIRST <= frame.can_id <= RESPONSE_ID_LAST:
            continue
        payload = frame.payload
        if len(payload) < 3 or payload[1] != POSITIVE_MODE_01:
            continue
        pid = payload[2]
        if pid not in PID_TABLE:
            result.skipped_unsupported += 1
            continue
        length = payload[0]
        data = payload[3:]
        if length < 2 + PID_TABLE[pid][1] or len(data) < PID_TABLE[pid][1]:
            result.malformed += 1
            continue
        result.samples.append(
            ObdSample(timestamp=frame.timestamp, pid=pid, value=decode_pid(pid, data))
        )
    if result.skipped_unsupported:
        log.debug("skipped %d unsupported-PID responses", result.skipped_unsupported)
    if result.malformed:
        log.debug("ignored %d malformed responses", result.malformed)
    return result


def _as_template(label: str, points: list[tuple[float, float]]) -> Template | None:
    points.sort(key=lambda p: p[0])
    times: list[float] = []
    values: list[float] = []
    for ts, value in points:
        if times and ts == times[-1]:
            continue  # keep the first sample of a duplicated timestamp
        times.append(ts)
        values.append(value)
    if len(times) < 2:
        log.warning("template %s has %d usable sample(s); needs 2, dropped", label, len(times))
        return None
    return Template(label=label, timestamps=np.array(times), values=np.array(values))


def build_templates(
    samples: list[ObdSample],
    extra: dict[str, Template] | None = None,
) -> dict[str, Template]:
    """Group samples into per-label matching templates, sorted by time.

    ``extra`` templates (for example from a template CSV) are merged in and
    win over same-named OBD-derived ones.
    """
    grouped: dict[str, list[tuple[float, float]]] = {}
    for sample in samples:
        grouped.setdefault(pid_label(sample.pid), []).append((sample.timestamp, sample.value))

    templates: dict[str, Template] = {}
    for label in sorted(grouped):
        template = _as_template(label, grouped[label])
        if template is not None:
            templates[label] = template
    if extra:
        templates.update(extra)
    return templates


def load_template_csv(text: str) -> dict[str, Template]:
    """Read templates from CSV with header columns timestamp, label, value."""
    reader = csv.DictReader(io.StringIO(text))
    grouped: dict[str, list[tuple[float, float]]] = {}
    for row in reader:
        grouped.setdefault(row["label"].strip(), []).append(
            (float(row["timestamp"]), float(row["value"]))
        )
    templates = {}
    for label in sorted(grouped):
        template = _as_template(label, grouped[label])
        if template is not None:
            templates[label] = template
    return templates


def dump_template_csv(templates: dict[str, Template]) -> str:
    """Inverse of :func:`load_template_csv`."""
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["timestamp", "label", "value"])
    for label in sorted(templates):
        template = templates[label]
        for ts, value in zip(template.timestamps, template.values):
            writer.writerow([f"{ts:.6f}", label, repr(float(value))])
    return out.getvalue()


def dump_template_json(templates: dict[str, Template]) -> str:
    """Templates as a JSON document for inspection."""
    import json

    doc = {
        label: {
            "timestamps": [float(t) for t in template.timestamps],
            "values": [float(v) for v in template.values],
        }
        for label, template in sorted(templates.items())
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
