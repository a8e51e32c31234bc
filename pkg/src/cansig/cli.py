"""Command-line interface.

Stages are separate subcommands over one JSON artifact (slice -> label ->
match) and ``infer`` chains them; ``synth`` and ``eval`` close the loop for
end-to-end verification. Data errors exit 1 with a JSON payload on stderr;
usage errors exit 2 (click's default).
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import dbc as dbc_mod
from . import pipeline, report, synth
from .errors import CansigError
from .evaluate import evaluate
from .features import bit_feature_table, byte_feature_table
from .obd import (
    build_templates,
    dump_template_csv,
    dump_template_json,
    extract_obd_responses,
    load_template_csv,
)
from .trace import RawTrace, group_by_id, parse_candump, parse_csv, serialize_candump


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CansigError as exc:
            payload = {"error": type(exc).__name__, "message": str(exc)}
            click.echo(json.dumps(payload), err=True)
            sys.exit(1)

    return wrapper


def _read_trace(path: str, fmt: str, csv_columns: str | None) -> RawTrace:
    text = Path(path).read_text()
    if fmt == "csv":
        column_map = None
        if csv_columns:
            names = [c.strip() for c in csv_columns.split(",")]
            if len(names) != 4:
                raise click.UsageError("--csv-columns needs 4 comma-separated names")
            column_map = dict(zip(("timestamp", "id", "dlc", "data"), names))
        return parse_csv(text, column_map=column_map, source=path)
    return parse_candump(text, source=path)


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


trace_format_options = [
    click.option("--format", "fmt", type=click.Choice(["candump", "csv"]), default="candump",
                 show_default=True, help="Trace file format."),
    click.option("--csv-columns", default=None,
                 help="Header names for timestamp,id,dlc,data when --format csv."),
]

cluster_options = [
    click.option("--eps-byte", type=float, default=0.5, show_default=True,
                 help="DBSCAN radius for byte-level clustering."),
    click.option("--eps-bit", type=float, default=0.5, show_default=True,
                 help="DBSCAN radius for bit-level slicing."),
    click.option("--min-pts", type=int, default=2, show_default=True,
                 help="DBSCAN minimum neighborhood size (point included)."),
]

match_options = [
    click.option("--template-csv", type=click.Path(exists=True, dir_okay=False), default=None,
                 help="Extra templates (columns timestamp,label,value)."),
    click.option("--no-normalize", is_flag=True, help="Skip z-normalization before DTW."),
    click.option("--dtw-band", type=int, default=None, help="Sakoe-Chiba band width (off by default)."),
    click.option("--max-series", type=int, default=pipeline.DEFAULT_MAX_SERIES, show_default=True,
                 help="Downsample candidate series longer than this before DTW."),
    click.option("--max-dtw", type=float, default=None,
                 help="Reject matches with distance above this (off by default)."),
]


def _add_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn

    return wrap


def _dump_feature_tables(groups, outdir: Path):
    from .errors import TooFewFrames

    byte_rows = ["can_id,byte,flip_rate,average,distinct_ratio"]
    bit_rows = ["can_id,bit,flip_rate,average"]
    for can_id, id_trace in sorted(groups.items()):
        if not id_trace.usable_for_features or id_trace.width_bytes == 0:
            continue
        try:
            byte_table = byte_feature_table(id_trace)
            bit_table = bit_feature_table(id_trace)
        except TooFewFrames:
            continue  # e.g. variable-DLC IDs with starved byte columns
        for i, row in enumerate(byte_table, start=1):
            byte_rows.append(f"0x{can_id:X},{i},{row[0]!r},{row[1]!r},{row[2]!r}")
        for k, row in enumerate(bit_table, start=1):
            bit_rows.append(f"0x{can_id:X},{k},{row[0]!r},{row[1]!r}")
    (outdir / "byte_features.csv").write_text("\n".join(byte_rows) + "\n")
    (outdir / "bit_features.csv").write_text("\n".join(bit_rows) + "\n")


@click.group()
@click.version_option(package_name="cansig")
def main():
    """Reverse engineer CAN payload signal layouts from traffic logs."""


@main.command("slice")
@click.argument("trace", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", "outdir", default="out", show_default=True)
@_add_options(trace_format_options)
@_add_options(cluster_options)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--dump-features", is_flag=True, help="Also write per-byte/per-bit feature CSVs.")
@_handle_errors
def slice_cmd(trace, outdir, fmt, csv_columns, eps_byte, eps_bit, min_pts, threads, dump_features):
    """Infer signal boundaries; writes slices.json."""
    raw = _read_trace(trace, fmt, csv_columns)
    config = pipeline.PipelineConfig(eps_byte=eps_byte, eps_bit=eps_bit, min_pts=min_pts, threads=threads)
    groups = group_by_id(raw)
    inference = pipeline.slice_trace(groups, config, source=trace)
    out = _outdir(outdir)
    (out / "slices.json").write_text(pipeline.inference_to_json(inference, config))
    if dump_features:
        _dump_feature_tables(groups, out)
    click.echo(f"wrote {out / 'slices.json'}")


@main.command("label")
@click.argument("slices", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", "outdir", default="out", show_default=True)
@click.option("--eps0", type=float, default=None, help="Override the derived Switch/Dynamic threshold.")
@_handle_errors
def label_cmd(slices, outdir, eps0):
    """Assign general labels; writes labeled.json."""
    inference, config = pipeline.inference_from_json(Path(slices).read_text())
    config.eps0 = eps0
    pipeline.label_inference(inference, config)
    out = _outdir(outdir)
    (out / "labeled.json").write_text(pipeline.inference_to_json(inference, config))
    click.echo(f"wrote {out / 'labeled.json'} (eps0={inference.eps0!r})")


@main.command("match")
@click.argument("trace", type=click.Path(exists=True, dir_okay=False))
@click.argument("slices", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", "outdir", default="out", show_default=True)
@_add_options(trace_format_options)
@_add_options(match_options)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--emit-dbc", "emit_dbc_flag", is_flag=True, help="Also write inferred.dbc.")
@_handle_errors
def match_cmd(trace, slices, outdir, fmt, csv_columns, template_csv, no_normalize,
              dtw_band, max_series, max_dtw, threads, emit_dbc_flag):
    """Match Dynamic slices to OBD templates; writes matched.json."""
    raw = _read_trace(trace, fmt, csv_columns)
    inference, config = pipeline.inference_from_json(Path(slices).read_text())
    config.normalize = not no_normalize
    config.band = dtw_band
    config.max_series = max_series
    config.max_dtw = max_dtw
    config.threads = threads
    extra = load_template_csv(Path(template_csv).read_text()) if template_csv else None
    templates = build_templates(extract_obd_responses(raw).samples, extra=extra)
    groups = group_by_id(raw)
    pipeline.match_inference(inference, groups, templates, config)
    out = _outdir(outdir)
    (out / "matched.json").write_text(pipeline.inference_to_json(inference, config))
    click.echo(f"wrote {out / 'matched.json'}")
    if emit_dbc_flag:
        (out / "inferred.dbc").write_text(dbc_mod.emit_dbc(inference.slices, inference.payload_bytes, inference.extended_ids))
        click.echo(f"wrote {out / 'inferred.dbc'}")


@main.command("infer")
@click.argument("trace", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", "outdir", default="out", show_default=True)
@_add_options(trace_format_options)
@_add_options(cluster_options)
@click.option("--eps0", type=float, default=None, help="Override the derived Switch/Dynamic threshold.")
@_add_options(match_options)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--dump-features", is_flag=True, help="Also write per-byte/per-bit feature CSVs.")
@_handle_errors
def infer_cmd(trace, outdir, fmt, csv_columns, eps_byte, eps_bit, min_pts, eps0, template_csv,
              no_normalize, dtw_band, max_series, max_dtw, threads, dump_features):
    """Full pipeline; writes slices.json and inferred.dbc."""
    raw = _read_trace(trace, fmt, csv_columns)
    config = pipeline.PipelineConfig(
        eps_byte=eps_byte, eps_bit=eps_bit, min_pts=min_pts, eps0=eps0,
        normalize=not no_normalize, band=dtw_band, max_series=max_series,
        max_dtw=max_dtw, threads=threads,
    )
    extra = load_template_csv(Path(template_csv).read_text()) if template_csv else None
    inference = pipeline.infer(raw, config, extra_templates=extra)
    out = _outdir(outdir)
    (out / "slices.json").write_text(pipeline.inference_to_json(inference, config))
    (out / "inferred.dbc").write_text(dbc_mod.emit_dbc(inference.slices, inference.payload_bytes, inference.extended_ids))
    if dump_features:
        _dump_feature_tables(group_by_id(raw), out)
    click.echo(f"wrote {out / 'slices.json'} and {out / 'inferred.dbc'}")


@main.command("eval")
@click.argument("inferred", type=click.Path(exists=True, dir_okay=False))
@click.argument("truth", type=click.Path(exists=True, dir_okay=False))
@click.option("--annotations", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Category sidecar CSV (signal_name,category[,descriptive]).")
@click.option("--mode", type=click.Choice(["auto", "slicing", "general", "descriptive", "both"]),
              default="auto", show_default=True)
@click.option("-o", "--output", "outdir", default="out", show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True,
              help="Render PNG charts next to the CSV breakdown.")
@_handle_errors
def eval_cmd(inferred, truth, annotations, mode, outdir, figures):
    """Score inferred slices against ground truth; writes report files."""
    truth_doc = dbc_mod.parse_dbc(Path(truth).read_text(), provenance=truth)
    if annotations:
        dbc_mod.apply_annotations(truth_doc, dbc_mod.load_annotations(Path(annotations).read_text()))
    if inferred.endswith(".json"):
        inference, _config = pipeline.inference_from_json(Path(inferred).read_text())
        slices = inference.slices
    else:
        slices = dbc_mod.slices_from_dbc(dbc_mod.parse_dbc(Path(inferred).read_text(), provenance=inferred))
    result = evaluate(slices, truth_doc, mode=mode)
    out = _outdir(outdir)
    (out / "report.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "per_id.csv").write_text(report.per_id_csv(result))
    if figures:
        for path in report.render_figures(result, out):
            click.echo(f"wrote {path}")
    click.echo(f"wrote {out / 'report.json'} and {out / 'per_id.csv'}")
    click.echo(report.format_table(result))


@main.command("synth")
@click.argument("spec", type=click.Path(exists=True, dir_okay=False), required=False)
@click.option("--preset", type=click.Choice(["corpus20"]), default=None,
              help="Generate the built-in mixed corpus instead of reading a spec file.")
@click.option("--ids", "n_ids", type=int, default=20, show_default=True, help="Preset: CAN ID count.")
@click.option("--frames", type=int, default=None, help="Override frames per ID.")
@click.option("--seed", type=int, default=None, help="Override the spec seed.")
@click.option("-o", "--output", "outdir", default="corpus", show_default=True)
@_handle_errors
def synth_cmd(spec, preset, n_ids, frames, seed, outdir):
    """Generate a synthetic corpus: trace.log, truth.dbc, annotations.csv, templates.csv."""
    if (spec is None) == (preset is None):
        raise click.UsageError("give exactly one of SPEC or --preset")
    if preset:
        spec_obj = synth.preset_corpus(n_ids=n_ids, frames=frames or 10000, seed=seed or 0)
    else:
        spec_obj = synth.load_spec(spec)
        if seed is not None:
            spec_obj.seed = seed
        if frames is not None:
            for layout in spec_obj.ids:
                layout.frames = frames
    result = synth.generate_trace(spec_obj)
    out = _outdir(outdir)
    (out / "trace.log").write_text(serialize_candump(result.trace))
    (out / "truth.dbc").write_text(dbc_mod.dump_dbc(result.truth, version="cansig synthetic ground truth"))
    (out / "annotations.csv").write_text(dbc_mod.dump_annotations(result.annotations))
    (out / "templates.csv").write_text(dump_template_csv(result.templates))
    (out / "templates.json").write_text(dump_template_json(result.templates))
    (out / "spec.json").write_text(json.dumps(synth.spec_to_dict(spec_obj), indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote corpus under {out}")


@main.command("features")
@click.argument("trace", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", "outdir", default="out", show_default=True)
@_add_options(trace_format_options)
@_handle_errors
def features_cmd(trace, outdir, fmt, csv_columns):
    """Dump per-byte and per-bit feature tables as CSV."""
    raw = _read_trace(trace, fmt, csv_columns)
    out = _outdir(outdir)
    _dump_feature_tables(group_by_id(raw), out)
    click.echo(f"wrote {out / 'byte_features.csv'} and {out / 'bit_features.csv'}")


if __name__ == "__main__":
    main()
