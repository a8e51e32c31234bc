"""Seeded synthetic CAN corpora with known ground truth.

A spec describes per-ID signal layouts (which must tile the payload), frame
periods and counts, and kinematic profiles. Generation is deterministic per
seed and yields the raw trace (regular frames plus interleaved OBD-II
responses), the matching DBC ground truth, a category sidecar, and the
template series the OBD responses encode.

Signal behaviors by category:

* Unused: constant bits.
* Switch: value steps through a state cycle at Poisson-distributed events.
* Dynamic with a profile: the looped piecewise-linear trajectory quantized
  into the bit range plus additive dither; without a profile: uniform noise
  (a stand-in for payload content with no kinematic meaning).
* Verification: counters increment mod 2**width every frame; checksums are
  the sum of the other payload bytes mod 256.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dbc import GroundTruth, Message, SignalSpec, internal_to_dbc_pos
from .errors import InvalidSpec
from .obd import Template, decode_pid
from .trace import Frame, RawTrace

OBD_RESPONSE_ID = 0x7E8

#: label -> (loop seconds, piecewise-linear breakpoints over one loop).
#: Five-second loops divide both short and long captures evenly, so
#: time-averaged statistics do not drift with capture length, and each
#: profile's time-weighted mean sits near mid-range so the two bytes of a
#: wide signal share an average. What separates the labels under time warping
#: is the sequence of turning-point levels: a slow sweep with a mid-level
#: cruise shelf, fast full-range alternation, and an M-shape with mid-level
#: valleys.
BUILTIN_PROFILES: dict[str, tuple[float, list[tuple[float, float]]]] = {
    "VehicleSpeed": (
        5.0,
        [(0.0, 10.0), (1.06, 116.0), (2.12, 12.0), (2.69, 62.0), (3.44, 62.0),
         (4.12, 118.0), (5.0, 10.0)],
    ),
    "EngineSpeed": (
        5.0,
        [(0.0, 800.0), (0.625, 5800.0), (1.25, 1000.0), (1.875, 5600.0),
         (2.5, 900.0), (3.125, 5700.0), (3.75, 850.0), (4.375, 5500.0),
         (5.0, 800.0)],
    ),
    "ThrottlePosition": (
        5.0,
        [(0.0, 3.0), (0.5, 96.0), (0.95, 38.0), (1.4, 92.0), (1.95, 4.0),
         (2.6, 94.0), (3.1, 42.0), (3.6, 90.0), (4.15, 2.0), (4.65, 50.0),
         (5.0, 3.0)],
    ),
}

#: PIDs emitted by the generator and the profile each one encodes.
OBD_EMITTED_PIDS: dict[int, str] = {0x0C: "EngineSpeed", 0x0D: "VehicleSpeed", 0x11: "ThrottlePosition"}


@dataclass
class SignalDef:
    name: str
    category: str  # Unused | Switch | Dynamic | Verification
    m: int
    n: int
    profile: str | None = None
    dither: str = "lsb"  # lsb (uniform +-dither_low), uniform (+-dither_high), octaves (log-uniform magnitude)
    dither_low: int = 1
    dither_high: int = 1
    hold_probability: float = 0.0  # chance a frame repeats the previous value
    time_shift: float = 0.0
    toggle_rate: float = 0.05  # Switch events per second
    states: list[int] | None = None
    kind: str = "counter"  # Verification: counter | checksum
    value: int = 0  # Unused constant

    @property
    def width(self) -> int:
        return self.n - self.m + 1


@dataclass
class IdLayout:
    can_id: int
    dlc: int
    period_s: float
    frames: int
    signals: list[SignalDef] = field(default_factory=list)


@dataclass
class SynthSpec:
    ids: list[IdLayout] = field(default_factory=list)
    seed: int = 0
    obd_period_s: float = 0.2
    profiles: dict[str, tuple[float, list[tuple[float, float]]]] = field(default_factory=dict)

    def profile(self, label: str) -> tuple[float, list[tuple[float, float]]]:
        if label in self.profiles:
            return self.profiles[label]
        if label in BUILTIN_PROFILES:
            return BUILTIN_PROFILES[label]
        raise InvalidSpec(f"unknown profile {label!r}")


@dataclass
class SynthResult:
    trace: RawTrace
    truth: GroundTruth
    annotations: dict[str, tuple[str, str | None]]
    templates: dict[str, Template]


def validate_spec(spec: SynthSpec):
    if not spec.ids:
        raise InvalidSpec("spec has no CAN IDs")
    if spec.obd_period_s <= 0:
        raise InvalidSpec("obd_period_s must be positive")
    names: set[str] = set()
    for layout in spec.ids:
        if layout.period_s <= 0 or layout.frames < 1:
            raise InvalidSpec(f"id 0x{layout.can_id:X}: bad period or frame count")
        if not 1 <= layout.dlc <= 8:
            raise InvalidSpec(f"id 0x{layout.can_id:X}: dlc out of range")
        covered = [False] * (8 * layout.dlc)
        for sig in layout.signals:
            if sig.category not in ("Unused", "Switch", "Dynamic", "Verification"):
                raise InvalidSpec(f"{sig.name}: unknown category {sig.category!r}")
            if not 1 <= sig.m <= sig.n <= 8 * layout.dlc:
                raise InvalidSpec(f"{sig.name}: range [{sig.m},{sig.n}] outside payload")
            if sig.name in names:
                raise InvalidSpec(f"duplicate signal name {sig.name!r}")
            names.add(sig.name)
            for bit in range(sig.m - 1, sig.n):
                if covered[bit]:
                    raise InvalidSpec(f"{sig.name}: overlaps another signal at bit {bit + 1}")
                covered[bit] = True
            if sig.category == "Verification" and sig.kind == "checksum":
                if sig.width != 8 or (sig.m - 1) % 8 != 0:
                    raise InvalidSpec(f"{sig.name}: checksums must fill one whole byte")
            if sig.category == "Dynamic" and sig.profile is not None:
                spec.profile(sig.profile)  # raises on unknown labels
        if not all(covered):
            first = covered.index(False) + 1
            raise InvalidSpec(f"id 0x{layout.can_id:X}: layout does not tile payload (bit {first})")


def profile_values(spec: SynthSpec, label: str, t: np.ndarray) -> np.ndarray:
    loop_s, points = spec.profile(label)
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return np.interp(np.mod(t, loop_s), xs, ys)


def _switch_series(sig: SignalDef, t: np.ndarray, duration: float, rng) -> np.ndarray:
    # Default states alternate all-zeros/all-ones so every bit of the switch
    # carries the same series and the block clusters as one signal.
    states = sig.states if sig.states else [0, (1 << sig.width) - 1]
    expected = max(int(sig.toggle_rate * duration * 3) + 8, 16)
    gaps = rng.exponential(1.0 / sig.toggle_rate, size=expected) if sig.toggle_rate > 0 else np.array([])
    events = np.cumsum(gaps)
    events = events[events < duration]
    start = int(rng.integers(0, len(states)))
    index = (np.searchsorted(events, t, side="right") + start) % len(states)
    return np.asarray(states, dtype=np.int64)[index]


def _dither_series(sig: SignalDef, frames: int, rng) -> np.ndarray:
    if sig.dither == "lsb":
        return rng.integers(-sig.dither_low, sig.dither_low + 1, size=frames)
    if sig.dither == "uniform":
        return rng.integers(-sig.dither_high, sig.dither_high + 1, size=frames)
    if sig.dither != "octaves":
        raise InvalidSpec(f"{sig.name}: unknown dither mode {sig.dither!r}")
    low, high = max(sig.dither_low, 1), max(sig.dither_high, 1)
    magnitude = np.floor(np.exp(rng.uniform(math.log(low), math.log(high + 1), size=frames)))
    sign = rng.integers(0, 2, size=frames) * 2 - 1
    return (sign * magnitude).astype(np.int64)


def _forward_fill(values: np.ndarray, hold: np.ndarray) -> np.ndarray:
    # Sample-and-hold dropout: held frames repeat the previous value, the way
    # a signal repeats when its sensor updates slower than the frame rate.
    idx = np.arange(len(values))
    idx[hold] = 0
    np.maximum.accumulate(idx, out=idx)
    return values[idx]


def _dynamic_series(spec: SynthSpec, sig: SignalDef, t: np.ndarray, rng) -> np.ndarray:
    cap = (1 << sig.width) - 1
    if sig.profile is None:
        return rng.integers(0, cap + 1, size=len(t))
    loop_s, points = spec.profile(sig.profile)
    values = profile_values(spec, sig.profile, t + sig.time_shift)
    lo = min(p[1] for p in points)
    hi = max(p[1] for p in points)
    span = hi - lo if hi > lo else 1.0
    quantized = np.round((values - lo) * cap / span).astype(np.int64)
    dithered = quantized + _dither_series(sig, len(t), rng)
    # Reflect at the rails rather than clip, keeping bit occupancy balanced.
    dithered = np.abs(dithered)
    dithered = np.where(dithered > cap, 2 * cap - dithered, dithered)
    dithered = np.clip(dithered, 0, cap)
    if sig.hold_probability > 0:
        held = rng.random(len(t)) < sig.hold_probability
        held[0] = False
        dithered = _forward_fill(dithered, held)
    return dithered


def _write_block(bits: np.ndarray, sig: SignalDef, values: np.ndarray):
    for offset in range(sig.width):
        bits[:, sig.m - 1 + offset] = (values >> (sig.width - 1 - offset)) & 1


def generate_trace(spec: SynthSpec) -> SynthResult:
    """Produce trace + ground truth + sidecar + templates for a spec.

    Byte-identical output for identical specs: every random stream is keyed
    on (seed, can_id, signal index).
    """
    validate_spec(spec)
    frames: list[Frame] = []
    truth = GroundTruth(provenance=f"synthetic seed={spec.seed}")
    annotations: dict[str, tuple[str, str | None]] = {}
    max_duration = 0.0

    for layout in sorted(spec.ids, key=lambda l: l.can_id):
        duration = layout.frames * layout.period_s
        max_duration = max(max_duration, duration)
        t = np.round(np.arange(layout.frames) * layout.period_s, 6)
        bits = np.zeros((layout.frames, 8 * layout.dlc), dtype=np.uint8)
        checksums: list[SignalDef] = []

        for index, sig in enumerate(layout.signals):
            rng = np.random.default_rng(np.random.SeedSequence((spec.seed, layout.can_id, index)))
            if sig.category == "Unused":
                values = np.full(layout.frames, sig.value & ((1 << sig.width) - 1), dtype=np.int64)
            elif sig.category == "Switch":
                values = _switch_series(sig, t, duration, rng)
            elif sig.category == "Dynamic":
                values = _dynamic_series(spec, sig, t, rng)
            elif sig.kind == "checksum":
                checksums.append(sig)
                continue
            else:  # counter
                start = int(rng.integers(0, 1 << sig.width))
                values = (np.arange(layout.frames, dtype=np.int64) + start) % (1 << sig.width)
            _write_block(bits, sig, values)

        payload = np.packbits(bits, axis=1)
        for sig in checksums:
            byte_index = (sig.m - 1) // 8
            others = np.delete(np.arange(layout.dlc), byte_index)
            values = payload[:, others].sum(axis=1, dtype=np.int64) % 256
            _write_block(bits, sig, values)
            payload[:, byte_index] = values

        message = Message(can_id=layout.can_id, name=f"MSG_{layout.can_id:03X}", dlc=layout.dlc)
        for sig in layout.signals:
            if sig.category == "Unused":
                continue
            message.signals.append(
                SignalSpec(
                    name=sig.name,
                    start_bit=internal_to_dbc_pos(sig.m),
                    length_bits=sig.width,
                    byte_order="big",
                    minimum=0.0,
                    maximum=float((1 << sig.width) - 1),
                    descriptive=sig.profile if sig.category == "Dynamic" else None,
                    category=sig.category,
                )
            )
            annotations[sig.name] = (
                sig.category,
                sig.profile if sig.category == "Dynamic" else None,
            )
        truth.messages[layout.can_id] = message

        payload_bytes = payload.tobytes()
        for row in range(layout.frames):
            frames.append(
                Frame(
                    timestamp=float(t[row]),
                    can_id=layout.can_id,
                    dlc=layout.dlc,
                    payload=payload_bytes[row * layout.dlc : (row + 1) * layout.dlc],
                )
            )

    templates = _emit_obd(spec, frames, max_duration)
    frames.sort(key=lambda f: f.timestamp)
    trace = RawTrace(frames=frames, source=f"synthetic seed={spec.seed}")
    return SynthResult(trace=trace, truth=truth, annotations=annotations, templates=templates)


_SIGNAL_FIELDS = {
    "name", "category", "m", "n", "profile", "dither", "dither_low", "dither_high",
    "hold_probability", "time_shift", "toggle_rate", "states", "kind", "value",
}


def _signal_from_dict(data: dict) -> SignalDef:
    unknown = set(data) - _SIGNAL_FIELDS
    if unknown:
        raise InvalidSpec(f"unknown signal field(s): {', '.join(sorted(unknown))}")
    if not {"name", "category", "m", "n"} <= set(data):
        raise InvalidSpec("signals need at least name, category, m, n")
    return SignalDef(**data)


def spec_from_dict(data: dict) -> SynthSpec:
    """Build a spec from a parsed TOML/JSON document."""
    profiles = {}
    for label, prof in (data.get("profiles") or {}).items():
        profiles[label] = (
            float(prof["loop_s"]),
            [(float(t), float(v)) for t, v in prof["points"]],
        )
    ids = []
    for entry in data.get("ids", []):
        can_id = entry["can_id"]
        if isinstance(can_id, str):
            can_id = int(can_id, 0)
        ids.append(
            IdLayout(
                can_id=can_id,
                dlc=int(entry.get("dlc", 8)),
                period_s=float(entry.get("period_s", 0.01)),
                frames=int(entry.get("frames", 10000)),
                signals=[_signal_from_dict(s) for s in entry.get("signals", [])],
            )
        )
    return SynthSpec(
        ids=ids,
        seed=int(data.get("seed", 0)),
        obd_period_s=float(data.get("obd_period_s", 0.2)),
        profiles=profiles,
    )


def spec_to_dict(spec: SynthSpec) -> dict:
    """Inverse of :func:`spec_from_dict` (JSON-friendly)."""
    from dataclasses import asdict

    return {
        "seed": spec.seed,
        "obd_period_s": spec.obd_period_s,
        "profiles": {
            label: {"loop_s": loop_s, "points": [list(p) for p in points]}
            for label, (loop_s, points) in spec.profiles.items()
        },
        "ids": [
            {
                "can_id": layout.can_id,
                "dlc": layout.dlc,
                "period_s": layout.period_s,
                "frames": layout.frames,
                "signals": [
                    {k: v for k, v in asdict(sig).items() if v is not None}
                    for sig in layout.signals
                ],
            }
            for layout in spec.ids
        ],
    }


def load_spec(path) -> SynthSpec:
    """Read a spec file; .toml uses TOML, anything else is treated as JSON."""
    import json
    from pathlib import Path

    text = Path(path).read_text()
    if str(path).endswith((".toml", ".tml")):
        try:
            import tomllib as toml_parser  # type: ignore[import-not-found]
        except ModuleNotFoundError:  # Python 3.10
            import tomli as toml_parser
        data = toml_parser.loads(text)
    else:
        data = json.loads(text)
    return spec_from_dict(data)


def _unused(prefix: str, m: int, n: int, value: int = 0) -> SignalDef:
    return SignalDef(name=f"{prefix}_UN_{m}", category="Unused", m=m, n=n, value=value)


def _dyn(prefix: str, m: int, n: int, profile: str, shift: float) -> SignalDef:
    # Uniform dither at 9/32 of the value range washes out per-bit flip-rate
    # structure (bits land near 0.46 with a sub-floor dip at the top), so the
    # block clusters as one signal while the trajectory still dominates
    # template matching.
    width = n - m + 1
    cap = (1 << width) - 1
    return SignalDef(
        name=f"{prefix}_DYN_{m}",
        category="Dynamic",
        m=m,
        n=n,
        profile=profile,
        dither="uniform",
        dither_high=cap * 9 // 32,
        hold_probability=0.05,
        time_shift=shift,
    )


def _sw(prefix: str, m: int, n: int) -> SignalDef:
    return SignalDef(name=f"{prefix}_SW_{m}", category="Switch", m=m, n=n, toggle_rate=0.8)


def preset_corpus(
    n_ids: int = 20,
    frames: int = 10000,
    seed: int = 0,
    period_s: float = 0.01,
) -> SynthSpec:
    """Mixed-layout corpus: five rotating archetypes over ``n_ids`` CAN IDs.

    Layouts rotate dynamics over the three built-in profiles and mix in
    switches, counters, toggle bits, noise blocks, unused filler, and
    checksums. Layout randomness (shifts, constants) depends only on the
    seed, so changing ``frames`` rescales the same corpus.
    """
    import itertools

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0)))
    profile_cycle = itertools.cycle(sorted(BUILTIN_PROFILES))

    def profile() -> str:
        return next(profile_cycle)

    def shift() -> float:
        return round(float(rng.uniform(0.0, 1.2)), 3)

    ids: list[IdLayout] = []
    for index in range(n_ids):
        can_id = 0x0A0 + 0x21 * index
        prefix = f"S{can_id:03X}"
        arch = index % 5
        if arch == 0:  # two 16-bit dynamics
            signals = [
                _dyn(prefix, 1, 16, profile(), shift()),
                _dyn(prefix, 17, 32, profile(), shift()),
                _sw(prefix, 33, 34),
                _unused(prefix, 35, 40),
                _sw(prefix, 41, 41),
                _unused(prefix, 42, 48),
                _unused(prefix, 49, 56, value=int(rng.integers(0, 256))),
                SignalDef(name=f"{prefix}_CSUM_57", category="Verification", m=57, n=64, kind="checksum"),
            ]
        elif arch == 1:  # two 16-bit dynamics kept apart by a counter byte
            signals = [
                _dyn(prefix, 1, 16, profile(), shift()),
                SignalDef(name=f"{prefix}_CTR_17", category="Verification", m=17, n=20, kind="counter"),
                _unused(prefix, 21, 24),
                _dyn(prefix, 25, 40, profile(), shift()),
                _sw(prefix, 41, 42),
                _unused(prefix, 43, 48),
                _unused(prefix, 49, 56),
                SignalDef(name=f"{prefix}_CSUM_57", category="Verification", m=57, n=64, kind="checksum"),
            ]
        elif arch == 2:  # 16-bit dynamic plus a toggle bit
            signals = [
                _dyn(prefix, 1, 16, profile(), shift()),
                SignalDef(name=f"{prefix}_TOG_17", category="Verification", m=17, n=17, kind="counter"),
                _unused(prefix, 18, 24),
                SignalDef(name=f"{prefix}_NOISE_25", category="Dynamic", m=25, n=30),
                _unused(prefix, 31, 32),
                _sw(prefix, 33, 34),
                _unused(prefix, 35, 40),
                _unused(prefix, 41, 48, value=0xFF),
                _unused(prefix, 49, 56),
                SignalDef(name=f"{prefix}_CSUM_57", category="Verification", m=57, n=64, kind="checksum"),
            ]
        elif arch == 3:  # single 16-bit dynamic
            signals = [
                _dyn(prefix, 1, 16, profile(), shift()),
                _sw(prefix, 17, 18),
                _unused(prefix, 19, 24),
                SignalDef(name=f"{prefix}_NOISE_25", category="Dynamic", m=25, n=30),
                _unused(prefix, 31, 32),
                _unused(prefix, 33, 56),
                SignalDef(name=f"{prefix}_CSUM_57", category="Verification", m=57, n=64, kind="checksum"),
            ]
        else:  # quiet ID: switches only
            signals = [
                _sw(prefix, 1, 2),
                _unused(prefix, 3, 8),
                _sw(prefix, 9, 9),
                _unused(prefix, 10, 16),
                _sw(prefix, 17, 18),
                _unused(prefix, 19, 64),
            ]
        ids.append(IdLayout(can_id=can_id, dlc=8, period_s=period_s, frames=frames, signals=signals))
    return SynthSpec(ids=ids, seed=seed)


def _emit_obd(spec: SynthSpec, frames: list[Frame], duration: float) -> dict[str, Template]:
    ticks = int(duration / spec.obd_period_s)
    series: dict[str, tuple[list[float], list[float]]] = {
        label: ([], []) for label in OBD_EMITTED_PIDS.values()
    }
    for tick in range(ticks):
        base = round((tick + 1) * spec.obd_period_s, 6)
        for slot, (pid, label) in enumerate(sorted(OBD_EMITTED_PIDS.items())):
            ts = round(base + 0.002 * slot, 6)
            value = float(profile_values(spec, label, np.array([ts]))[0])
            if pid == 0x0C:
                raw = min(int(round(value * 4)), 0xFFFF)
                data = bytes([raw >> 8, raw & 0xFF])
            elif pid == 0x0D:
                data = bytes([min(int(round(value)), 0xFF)])
            else:
                data = bytes([min(int(round(value * 255 / 100)), 0xFF)])
            payload = bytes([2 + len(data), 0x41, pid]) + data
            frames.append(Frame(timestamp=ts, can_id=OBD_RESPONSE_ID, dlc=len(payload), payload=payload))
            times, values = series[label]
            times.append(ts)
            values.append(decode_pid(pid, data))
    templates = {}
    for label in sorted(series):
        times, values = series[label]
        if len(times) >= 2:
            templates[label] = Template(label=label, timestamps=np.array(times), values=np.array(values))
    return templates
