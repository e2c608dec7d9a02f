"""Deterministic artifact emission: CSV, JSON, manifests, and SVG charts.

All writers are byte-deterministic given their inputs: floats are
rendered with repr (shortest round-trip form, "inf"/"nan" for
non-finite), rows end with a single LF, and files are written atomically
(temp file then rename) so a crashed run never leaves half an artifact.
Timestamps appear only in manifests, never in data files.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .probe import ConditioningReport
from .randmat import KappaStats
from .training import GridRow, RunResult

__all__ = [
    "canonical_json",
    "conditioning_csv",
    "csv_text",
    "format_cell",
    "grid_csv",
    "grid_summary",
    "make_manifest",
    "metrics_csv",
    "run_summary",
    "svg_line_chart",
    "theory_csv",
    "utc_now_iso",
    "write_atomic",
]


def format_cell(value) -> str:
    """Canonical cell rendering: ints plain, floats via repr."""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    raise TypeError(f"unsupported cell type {type(value).__name__}")


def csv_text(header, rows) -> str:
    """Header-first CSV with LF endings and minimal quoting."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(cell) for cell in row])
    return buffer.getvalue()


def write_atomic(path, text: str) -> None:
    """Write text via a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.unlink(temp_path)
        raise


def _sanitize(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(key): _sanitize(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(value) for value in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not np.isfinite(value):
            return repr(value)
        return value
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_sanitize(obj), indent=2, sort_keys=True) + "\n"


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def make_manifest(command: str, config_echo: dict, seeds: dict,
                  outputs: list[str], started_at: str, finished_at: str) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config": config_echo,
        "seeds": seeds,
        "outputs": sorted(outputs),
        "started_at": started_at,
        "finished_at": finished_at,
    }


def theory_csv(stats: list[KappaStats]) -> str:
    header = ["h", "D", "trials", "mean_kappa", "std_kappa", "min", "max",
              "asymptotic_kappa", "rank_deficient"]
    rows = [
        (s.h, s.D, s.trials, s.mean_kappa, s.std_kappa, s.min_kappa,
         s.max_kappa, s.asymptotic_kappa, s.rank_deficient_count)
        for s in stats
    ]
    return csv_text(header, rows)


def metrics_csv(result: RunResult) -> str:
    header = ["step", "loss", "lr"]
    rows = [
        (step, loss, rate)
        for step, (loss, rate) in enumerate(
            zip(result.loss_curve, result.lr_curve), start=1)
    ]
    return csv_text(header, rows)


def conditioning_csv(reports: tuple[ConditioningReport, ...]) -> str:
    header = ["step", "layer", "head", "kappa", "concat_kappa",
              "mean_concat_kappa_across_layers", "rank_deficient_heads"]
    rows = []
    for report in reports:
        for layer in report.per_layer:
            for head, kappa in enumerate(layer.per_head_kappa):
                rows.append((
                    report.step, layer.layer, head, kappa, layer.concat_kappa,
                    report.mean_concat_kappa_across_layers,
                    report.rank_deficient_heads,
                ))
    return csv_text(header, rows)


def grid_csv(rows: list[GridRow]) -> str:
    header = ["depth", "heads", "params", "mean_acc", "std_acc",
              "final_mean_kappa"]
    data = [
        (r.depth, r.heads, r.params, r.mean_acc, r.std_acc, r.final_mean_kappa)
        for r in rows
    ]
    return csv_text(header, data)


def _config_dicts(result: RunResult) -> dict:
    from dataclasses import asdict
    return {
        "model": asdict(result.model_config),
        "task": asdict(result.task),
        "train": asdict(result.train_config),
    }


def run_summary(result: RunResult) -> dict:
    final_kappa = (
        result.conditioning[-1].mean_concat_kappa_across_layers
        if result.conditioning else float("nan")
    )
    return {
        "final_train_loss": result.final_train_loss,
        "final_eval_accuracy": result.final_eval_accuracy,
        "final_mean_kappa": final_kappa,
        "param_count": result.param_count,
        "steps": len(result.loss_curve),
        "probe": result.probe_metadata,
        "config": _config_dicts(result),
    }


def grid_summary(rows: list[GridRow], config_echo: dict) -> dict:
    return {
        "cells": [
            {
                "depth": r.depth, "heads": r.heads, "params": r.params,
                "mean_acc": r.mean_acc, "std_acc": r.std_acc,
                "final_mean_kappa": r.final_mean_kappa,
                "accuracies": list(r.accuracies),
                "failed_runs": r.failed_runs,
            }
            for r in rows
        ],
        "config": config_echo,
    }


def svg_line_chart(points, *, title: str, x_label: str, y_label: str,
                   width: int = 640, height: int = 400) -> str:
    """Single-series line chart as self-contained SVG markup.

    Every finite point is drawn as a circle carrying its exact data
    values in data-x/data-y attributes (the strings match the CSV cell
    rendering), so charts can be checked against their source tables.
    Non-finite y values are skipped in the geometry.
    """
    finite = [(x, y) for x, y in points if np.isfinite(y)]
    margin_left, margin_right, margin_top, margin_bottom = 60, 20, 40, 45
    plot_w = width - margin_left - margin_right
    plot_h = height - margin_top - margin_bottom

    def x_span():
        xs = [p[0] for p in finite]
        low, high = min(xs), max(xs)
        return (low, high if high > low else low + 1.0)

    def y_span():
        ys = [p[1] for p in finite]
        low, high = min(ys), max(ys)
        if high == low:
            low, high = low - 0.5, high + 0.5
        return low, high

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="monospace" font-size="14">{title}</text>',
        f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle" '
        f'font-family="monospace" font-size="12">{x_label}</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" '
        f'font-family="monospace" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.1f})">{y_label}</text>',
        f'<rect x="{margin_left}" y="{margin_top}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="black"/>',
    ]
    if finite:
        x_lo, x_hi = x_span()
        y_lo, y_hi = y_span()

        def map_point(x, y):
            px = margin_left + (x - x_lo) / (x_hi - x_lo) * plot_w
            py = margin_top + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h
            return px, py

        coords = [map_point(x, y) for x, y in finite]
        if len(coords) > 1:
            path = " ".join(f"{px:.2f},{py:.2f}" for px, py in coords)
            parts.append(
                f'<polyline points="{path}" fill="none" stroke="steelblue" '
                f'stroke-width="1.5"/>'
            )
        for (x, y), (px, py) in zip(finite, coords):
            parts.append(
                f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.5" '
                f'fill="steelblue" data-x="{format_cell(x)}" '
                f'data-y="{format_cell(y)}"/>'
            )
        parts.append(
            f'<text x="{margin_left}" y="{margin_top - 6}" '
            f'font-family="monospace" font-size="11">'
            f'y: {format_cell(y_lo)} .. {format_cell(y_hi)}</text>'
        )
    else:
        parts.append(
            f'<text x="{width / 2:.1f}" y="{height / 2:.1f}" '
            f'text-anchor="middle" font-family="monospace" font-size="12">'
            f'no finite data</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
