"""Pipeline orchestration and the JSON artifact shared by all CLI stages.

The artifact is a single document that every stage enriches in place:
``slice`` fills boundaries and block features, ``label`` adds general labels
plus the derived threshold, ``match`` adds descriptive labels for Dynamic
slices. Running ``infer`` is exactly the three stages back to back, so stage
outputs compose byte-for-byte.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .clustering import DbscanParams, SignalSlice, slice_payload
from .errors import TooFewFrames
from .labeling import label_slices
from .matching import DEFAULT_MAX_SERIES, match_label, serialize_signal
from .obd import Template, build_templates, extract_obd_responses
from .trace import IdTrace, RawTrace, group_by_id

SCHEMA = "cansig-slices-v1"


@dataclass
class PipelineConfig:
    eps_byte: float = 0.5
    eps_bit: float = 0.5
    min_pts: int = 2
    eps0: float | None = None
    normalize: bool = True
    band: int | None = None
    max_series: int = DEFAULT_MAX_SERIES
    max_dtw: float | None = None
    threads: int = 1

    @property
    def byte_params(self) -> DbscanParams:
        return DbscanParams(eps=self.eps_byte, min_pts=self.min_pts)

    @property
    def bit_params(self) -> DbscanParams:
        return DbscanParams(eps=self.eps_bit, min_pts=self.min_pts)


@dataclass
class Inference:
    """Per-ID slices plus bookkeeping shared by the artifact stages."""

    slices: dict[int, list[SignalSlice]] = field(default_factory=dict)
    payload_bytes: dict[int, int] = field(default_factory=dict)
    frame_counts: dict[int, int] = field(default_factory=dict)
    extended_ids: set[int] = field(default_factory=set)
    skipped_ids: dict[int, str] = field(default_factory=dict)
    eps0: float | None = None
    stages: list[str] = field(default_factory=list)
    template_labels: list[str] = field(default_factory=list)
    source: str = "<memory>"


def slice_trace(groups: dict[int, IdTrace], config: PipelineConfig, source: str = "<memory>") -> Inference:
    """Stage one: boundary slicing for every CAN ID with enough frames."""
    result = Inference(source=source, stages=["slice"])
    usable = []
    for can_id, id_trace in sorted(groups.items()):
        result.payload_bytes[can_id] = id_trace.width_bytes
        result.frame_counts[can_id] = id_trace.frame_count
        if id_trace.extended:
            result.extended_ids.add(can_id)
        if not id_trace.usable_for_features or id_trace.width_bytes == 0:
            result.skipped_ids[can_id] = "fewer than 2 frames" if id_trace.frame_count < 2 else "empty payload"
            continue
        usable.append(id_trace)

    def work(id_trace: IdTrace) -> tuple[int, list[SignalSlice] | None]:
        try:
            return id_trace.can_id, slice_payload(id_trace, config.byte_params, config.bit_params)
        except TooFewFrames:
            # e.g. variable-DLC IDs where some byte column never has two
            # adjacent unpadded rows; their features are undefined.
            return id_trace.can_id, None

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(work, usable))
    else:
        outcomes = [work(id_trace) for id_trace in usable]
    for can_id, slices in outcomes:
        if slices is None:
            result.skipped_ids[can_id] = "insufficient unpadded frames for features"
        else:
            result.slices[can_id] = slices
    return result


def label_inference(inference: Inference, config: PipelineConfig) -> Inference:
    """Stage two: pooled threshold derivation and general labels."""
    pooled = [s for slices in inference.slices.values() for s in slices]
    context = label_slices(pooled, eps0=config.eps0)
    inference.eps0 = context.eps0
    if "label" not in inference.stages:
        inference.stages.append("label")
    return inference


def match_inference(
    inference: Inference,
    groups: dict[int, IdTrace],
    templates: dict[str, Template],
    config: PipelineConfig,
) -> Inference:
    """Stage three: DTW descriptive labels for Dynamic slices."""
    inference.template_labels = sorted(templates)
    if "match" not in inference.stages:
        inference.stages.append("match")
    if not templates:
        return inference
    jobs = [
        (groups[can_id], s)
        for can_id, slices in sorted(inference.slices.items())
        for s in slices
        if s.label == "Dynamic"
    ]

    def work(job):
        id_trace, s = job
        candidate = serialize_signal(id_trace, s)
        return s, match_label(
            candidate,
            templates,
            normalize=config.normalize,
            band=config.band,
            max_points=config.max_series,
            max_distance=config.max_dtw,
        )

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]
    for s, outcome in results:
        s.descriptive_label = outcome.matched_label
        s.dtw_distance = outcome.distance
        s.dtw_distances = outcome.per_template
    return inference


def infer(raw: RawTrace, config: PipelineConfig, extra_templates: dict[str, Template] | None = None) -> Inference:
    """Full pipeline: group, slice, label, and match against OBD templates."""
    groups = group_by_id(raw)
    inference = slice_trace(groups, config, source=raw.source)
    label_inference(inference, config)
    templates = build_templates(extract_obd_responses(raw).samples, extra=extra_templates)
    match_inference(inference, groups, templates, config)
    return inference


def _slice_to_dict(s: SignalSlice) -> dict:
    out: dict = {"m": s.m, "n": s.n}
    if s.features is not None:
        out["b"] = s.features.flip_rate
        out["a"] = s.features.average
        out["u"] = s.features.distinct_ratio
    if s.theta is not None:
        out["theta"] = s.theta
    if s.label is not None:
        out["label"] = s.label
    if s.descriptive_label is not None:
        out["descriptive_label"] = s.descriptive_label
    if s.dtw_distance is not None:
        out["dtw_distance"] = s.dtw_distance
    if s.dtw_distances is not None:
        out["dtw_distances"] = s.dtw_distances
    return out


def _slice_from_dict(can_id: int, data: dict) -> SignalSlice:
    from .features import BlockFeatures

    features = None
    if "b" in data:
        features = BlockFeatures(
            flip_rate=data["b"], average=data["a"], distinct_ratio=data["u"]
        )
    return SignalSlice(
        can_id=can_id,
        m=data["m"],
        n=data["n"],
        features=features,
        theta=data.get("theta"),
        label=data.get("label"),
        descriptive_label=data.get("descriptive_label"),
        dtw_distance=data.get("dtw_distance"),
        dtw_distances=data.get("dtw_distances"),
    )


def inference_to_json(inference: Inference, config: PipelineConfig) -> str:
    doc = {
        "schema": SCHEMA,
        "meta": {
            "source": inference.source,
            "stages": inference.stages,
            "eps_byte": config.eps_byte,
            "eps_bit": config.eps_bit,
            "min_pts": config.min_pts,
            "eps0": inference.eps0,
            "normalize": config.normalize,
            "dtw_band": config.band,
            "max_series": config.max_series,
            "max_dtw": config.max_dtw,
            "templates": inference.template_labels,
            "skipped_ids": {f"0x{i:X}": why for i, why in sorted(inference.skipped_ids.items())},
        },
        "ids": {
            f"0x{can_id:X}": {
                "frames": inference.frame_counts.get(can_id),
                "payload_bytes": inference.payload_bytes.get(can_id),
                "extended": can_id in inference.extended_ids,
                "slices": [_slice_to_dict(s) for s in slices],
            }
            for can_id, slices in sorted(inference.slices.items())
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def inference_from_json(text: str) -> tuple[Inference, PipelineConfig]:
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unexpected artifact schema {doc.get('schema')!r}")
    meta = doc["meta"]
    config = PipelineConfig(
        eps_byte=meta["eps_byte"],
        eps_bit=meta["eps_bit"],
        min_pts=meta["min_pts"],
        eps0=None,
        normalize=meta["normalize"],
        band=meta["dtw_band"],
        max_series=meta["max_series"],
        max_dtw=meta["max_dtw"],
    )
    inference = Inference(
        eps0=meta["eps0"],
        stages=list(meta["stages"]),
        template_labels=list(meta["templates"]),
        source=meta["source"],
    )
    for id_text, entry in doc["ids"].items():
        can_id = int(id_text, 16)
        inference.frame_counts[can_id] = entry["frames"]
        inference.payload_bytes[can_id] = entry["payload_bytes"]
        if entry.get("extended"):
            inference.extended_ids.add(can_id)
        inference.slices[can_id] = [_slice_from_dict(can_id, s) for s in entry["slices"]]
    for id_text, why in meta.get("skipped_ids", {}).items():
        inference.skipped_ids[int(id_text, 16)] = why
    return inference, config
