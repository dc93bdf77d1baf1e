"""Evaluation report files: JSON summary, per-item TSV and matplotlib figures."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import MetricReport, format_table  # noqa: E402
from .pipeline import STAGES, PipelineTrace  # noqa: E402


def _figure(width: float = 8, height: float | None = None):
    golden_ratio = (math.sqrt(5) - 1.0) / 2.0
    fig, ax = plt.subplots(figsize=(width, height or width * golden_ratio), facecolor="w")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    return fig, ax


def plot_metric_bars(reports: Sequence[MetricReport], path: str | Path) -> Path:
    """Grouped bars of mean score per metric, one group per configuration, std as error bars."""
    metrics = list(dict.fromkeys(m for r in reports for m in r.metrics))
    fig, ax = _figure(max(6.0, 1.4 * len(reports) + 3))
    x = np.arange(len(reports))
    width = 0.8 / max(len(metrics), 1)
    for i, metric in enumerate(metrics):
        means, stds = [], []
        for r in reports:
            agg = r.aggregate().get(metric) or {}
            means.append(100 * agg["mean"] if agg.get("mean") is not None else float("nan"))
            stds.append(100 * agg["std"] if agg.get("std") is not None else 0.0)
        ax.bar(x + (i - (len(metrics) - 1) / 2) * width, means, width, yerr=stds, capsize=3, label=metric)
    ax.set_xticks(x)
    ax.set_xticklabels([r.label for r in reports], rotation=20, ha="right")
    ax.set_ylabel("score (%)")
    ax.set_ylim(0, 105)
    ax.legend(frameon=False, ncol=len(metrics))
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_stage_durations(traces: Mapping[str, Sequence[PipelineTrace]], path: str | Path) -> Path:
    """Stacked bars of mean wall-clock time per pipeline stage for each configuration."""
    labels = list(traces)
    fig, ax = _figure(max(6.0, 1.2 * len(labels) + 3))
    bottom = np.zeros(len(labels))
    for stage in STAGES:
        vals = np.array(
            [np.mean([t.durations.get(stage, 0.0) for t in traces[l]]) if traces[l] else 0.0 for l in labels]
        )
        if not vals.any():
            continue
        ax.bar(labels, vals * 1e3, bottom=bottom * 1e3, label=stage)
        bottom += vals
    ax.set_ylabel("mean time per query (ms)")
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    ax.legend(frameon=False, fontsize="small")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def write_per_item_tsv(reports: Sequence[MetricReport], path: str | Path) -> Path:
    metrics = list(dict.fromkeys(m for r in reports for m in r.metrics))
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["config", "run", "item", *metrics])
        for r in reports:
            for run, per_item in enumerate(r.scores):
                for item_id, scores in per_item.items():
                    writer.writerow(
                        [r.label, run, item_id, *(f"{scores[m]:.6f}" if m in scores else "" for m in metrics)]
                    )
    return path


def write_report(
    reports: Sequence[MetricReport],
    out_dir: str | Path,
    traces: Mapping[str, Sequence[PipelineTrace]] | None = None,
) -> dict[str, Path]:
    """Write ``report.json``, ``per_item.tsv``, ``metrics.png`` and, given traces, ``durations.png``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "report.json"}
    with open(paths["json"], "w", encoding="utf-8") as fh:
        json.dump(
            {"reports": [r.to_dict() for r in reports], "table": format_table(reports)},
            fh, ensure_ascii=False, indent=2,
        )
    paths["tsv"] = write_per_item_tsv(reports, out / "per_item.tsv")
    paths["metrics_figure"] = plot_metric_bars(reports, out / "metrics.png")
    if traces:
        paths["durations_figure"] = plot_stage_durations(traces, out / "durations.png")
    return paths
