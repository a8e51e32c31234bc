"""Rendering of evaluation reports: text table, CSV breakdown, figures."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluate import EvalReport


def _pct(value: float | None) -> str:
    return "-" if value is None else f"{100.0 * value:6.2f}%"


def format_table(report: EvalReport) -> str:
    lines = [
        "metric                value",
        f"slicing accuracy    {_pct(report.zeta)}",
        f"slicing coverage    {_pct(report.varpi)}",
        f"labeling (general)  {_pct(report.xi_general)}",
        f"labeling (descr.)   {_pct(report.xi_descriptive)}",
        "",
        f"evaluated CAN IDs   {len(report.evaluated_ids)}",
        f"ground-truth signals {report.truth_signals}",
        f"inferred slices     {report.inferred_slices}",
        "",
        "per signal type       acc      cov      label",
    ]
    for key in sorted(report.per_type):
        stats = report.per_type[key]
        lines.append(
            f"  {key:<18}{_pct(stats.accuracy.value)}  {_pct(stats.coverage.value)}  "
            f"{_pct(stats.label_general.value)}"
        )
    return "\n".join(lines) + "\n"


def per_id_csv(report: EvalReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(
        ["can_id", "truth_bits", "slicing_accuracy", "slicing_coverage",
         "labeling_general", "labeling_descriptive"]
    )
    for can_id in sorted(report.per_id):
        stats = report.per_id[can_id]
        writer.writerow(
            [
                f"0x{can_id:X}",
                stats.accuracy.denominator,
                _csv_value(stats.accuracy),
                _csv_value(stats.coverage),
                _csv_value(stats.label_general),
                _csv_value(stats.label_descriptive),
            ]
        )
    return out.getvalue()


def _csv_value(ratio) -> str:
    return "" if ratio.value is None else f"{ratio.value:.6f}"


def _bar_figure(path: Path, title: str, categories: list[str], series: dict[str, list[float | None]]):
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(categories)), 4.0))
    width = 0.8 / max(len(series), 1)
    for offset, (name, values) in enumerate(series.items()):
        xs = [i + offset * width for i in range(len(categories))]
        ys = [0.0 if v is None else v for v in values]
        ax.bar(xs, ys, width=width, label=name)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(categories))])
    ax.set_xticklabels(categories, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("ratio")
    ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(report: EvalReport, outdir: Path) -> list[Path]:
    """Write the standard report figures; returns the created paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []

    def values(groups: dict, picker) -> list[float | None]:
        return [picker(groups[key]) for key in sorted(groups)]

    if report.per_type:
        path = outdir / "metrics_by_type.png"
        keys = sorted(report.per_type)
        _bar_figure(
            path,
            "Metrics by ground-truth signal type",
            keys,
            {
                "slicing accuracy": values(report.per_type, lambda b: b.accuracy.value),
                "slicing coverage": values(report.per_type, lambda b: b.coverage.value),
                "labeling": values(report.per_type, lambda b: b.label_general.value),
            },
        )
        created.append(path)

    if report.per_length:
        path = outdir / "metrics_by_length.png"
        keys = sorted(report.per_length)
        _bar_figure(
            path,
            "Slicing metrics by signal length (bits)",
            [str(k) for k in keys],
            {
                "slicing accuracy": [report.per_length[k].accuracy.value for k in keys],
                "slicing coverage": [report.per_length[k].coverage.value for k in keys],
            },
        )
        created.append(path)

    if report.per_id:
        path = outdir / "metrics_by_id.png"
        ids = sorted(report.per_id)
        fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(ids)), 4.0))
        xs = range(len(ids))
        acc = [report.per_id[i].accuracy.value or 0.0 for i in ids]
        cov = [report.per_id[i].coverage.value or 0.0 for i in ids]
        ax.plot(xs, acc, marker="o", label="slicing accuracy")
        ax.plot(xs, cov, marker="s", label="slicing coverage")
        ax.set_xticks(list(xs))
        ax.set_xticklabels([f"0x{i:X}" for i in ids], rotation=45, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_title("Per-ID slicing metrics")
        ax.legend(loc="lower right")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        created.append(path)
    return created
