"""Run artifacts on disk: CSV curves, threshold tables, SVG learning curves.

Floats are written with 17 significant digits so CSV round trips reproduce
the in-memory float64 values exactly.  The SVG writer is dependency-free and
formats every coordinate with fixed precision, so identical inputs produce
identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from argal.engine import CurvePoint, RunArtifact, ThresholdReport, thresholds


def fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_curve_csv(path: Path, curve: Sequence[CurvePoint]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["labeled_count", "dev_macro_f1", "epoch_seconds_mean"])
        for point in curve:
            writer.writerow(
                [point.labeled_count, fmt(point.dev_macro_f1), fmt(point.epoch_seconds_mean)]
            )


def write_mean_curve_csv(path: Path, curve: Sequence[tuple[int, float]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["labeled_count", "dev_macro_f1"])
        for labeled_count, f1 in curve:
            writer.writerow([labeled_count, fmt(f1)])


def read_mean_curve_csv(path: Path) -> list[tuple[int, float]]:
    with open(path, encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    return [(int(r[0]), float(r[1])) for r in rows[1:]]


def write_baseline_csv(path: Path, per_seed: dict[int, float], mean: float) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["seed", "best_dev_f1"])
        for seed in sorted(per_seed):
            writer.writerow([seed, fmt(per_seed[seed])])
        writer.writerow(["mean", fmt(mean)])


def read_baseline_csv(path: Path) -> float:
    with open(path, encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    for row in rows[1:]:
        if row[0] == "mean":
            return float(row[1])
    raise ValueError(f"{path}: no mean row")


def write_thresholds_csv(path: Path, report: ThresholdReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["percentage", "samples"])
        for p, samples in report.entries:
            writer.writerow([fmt(p), "not reached" if samples is None else samples])


def write_timings_csv(path: Path, artifact: RunArtifact) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["seed", "episode", "labeled_count", "epochs_run", "epoch_seconds_mean"])
        for seed in sorted(artifact.curves):
            for episode, point in enumerate(artifact.curves[seed], start=1):
                writer.writerow(
                    [
                        seed,
                        episode,
                        point.labeled_count,
                        point.epochs_run,
                        fmt(point.epoch_seconds_mean),
                    ]
                )


def write_run_artifact(
    out_dir: Path,
    artifact: RunArtifact,
    config_text: str,
    percentages: Sequence[float] = (0.90, 0.95, 0.99, 1.00),
) -> ThresholdReport:
    """Write the full artifact directory; returns the threshold report."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.snapshot").write_text(config_text, encoding="utf-8")
    for seed, curve in artifact.curves.items():
        write_curve_csv(out_dir / f"curve.seed-{seed}.csv", curve)
    mean = artifact.mean_curve
    write_mean_curve_csv(out_dir / "curve.mean.csv", mean)
    write_baseline_csv(out_dir / "baseline.csv", artifact.baseline_per_seed, artifact.baseline)
    report = thresholds(mean, artifact.baseline, percentages)
    write_thresholds_csv(out_dir / "thresholds.csv", report)
    write_timings_csv(out_dir / "timings.csv", artifact)
    return report


def render_threshold_table(
    rows: Sequence[tuple[str, str, ThresholdReport]], percentages: Sequence[float]
) -> str:
    """Text table: one row per (model, strategy), one column per percentage."""
    header = ["model", "strategy", "baseline"] + [f"{int(round(p * 100))}%" for p in percentages]
    table = [header]
    for model, strategy, report in rows:
        cells = [model, strategy, f"{report.baseline:.3f}"]
        for p in percentages:
            samples = report.samples_at(p)
            cells.append("not reached" if samples is None else str(samples))
        table.append(cells)
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = []
    for idx, row in enumerate(table):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(header))))
    return "\n".join(lines) + "\n"


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

SVG_WIDTH, SVG_HEIGHT = 800, 500
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 30, 30, 50


def render_learning_curves_svg(
    curves: Sequence[tuple[str, Sequence[tuple[int, float]]]],
    baselines: Sequence[float],
    threshold_marks: Sequence[tuple[int, float]] = (),
) -> str:
    """Deterministic SVG: one polyline per curve, dashed baseline lines,
    circle markers at threshold crossings."""
    if not curves:
        raise ValueError("no curves to plot")
    xs = [x for _, curve in curves for x, _ in curve]
    x_min, x_max = 0, max(xs)
    y_min, y_max = 0.0, 1.0

    def sx(x: float) -> float:
        span = max(1, x_max - x_min)
        return MARGIN_LEFT + (x - x_min) / span * (SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT)

    def sy(y: float) -> float:
        return SVG_HEIGHT - MARGIN_BOTTOM - (y - y_min) / (y_max - y_min) * (
            SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
        )

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        f'<rect width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<line x1="{MARGIN_LEFT}" y1="{sy(0):.2f}" x2="{SVG_WIDTH - MARGIN_RIGHT}" '
        f'y2="{sy(0):.2f}" stroke="black"/>',
        f'<line x1="{MARGIN_LEFT}" y1="{sy(0):.2f}" x2="{MARGIN_LEFT}" '
        f'y2="{sy(1):.2f}" stroke="black"/>',
    ]
    for tick in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
        parts.append(
            f'<text x="{MARGIN_LEFT - 8}" y="{sy(tick):.2f}" font-size="12" '
            f'text-anchor="end" dominant-baseline="middle">{tick:.1f}</text>'
        )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        x_val = int(round(x_min + frac * (x_max - x_min)))
        parts.append(
            f'<text x="{sx(x_val):.2f}" y="{SVG_HEIGHT - MARGIN_BOTTOM + 18}" font-size="12" '
            f'text-anchor="middle">{x_val}</text>'
        )
    parts.append(
        f'<text x="{(MARGIN_LEFT + SVG_WIDTH - MARGIN_RIGHT) / 2:.2f}" '
        f'y="{SVG_HEIGHT - 12}" font-size="13" text-anchor="middle">labeled samples</text>'
    )
    parts.append(
        f'<text x="16" y="{(MARGIN_TOP + SVG_HEIGHT - MARGIN_BOTTOM) / 2:.2f}" font-size="13" '
        f'text-anchor="middle" transform="rotate(-90 16 '
        f'{(MARGIN_TOP + SVG_HEIGHT - MARGIN_BOTTOM) / 2:.2f})">dev macro F1</text>'
    )
    for idx, baseline in enumerate(baselines):
        color = PALETTE[idx % len(PALETTE)]
        parts.append(
            f'<line x1="{MARGIN_LEFT}" y1="{sy(baseline):.2f}" '
            f'x2="{SVG_WIDTH - MARGIN_RIGHT}" y2="{sy(baseline):.2f}" '
            f'stroke="{color}" stroke-dasharray="6,4" stroke-width="1"/>'
        )
    for idx, (label, curve) in enumerate(curves):
        color = PALETTE[idx % len(PALETTE)]
        points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in curve)
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{points}"/>'
        )
        parts.append(
            f'<text x="{SVG_WIDTH - MARGIN_RIGHT - 6}" y="{MARGIN_TOP + 16 * (idx + 1)}" '
            f'font-size="12" text-anchor="end" fill="{color}">{label}</text>'
        )
    for x, y in threshold_marks:
        parts.append(
            f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="4" fill="none" '
            f'stroke="black" stroke-width="1.5"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
