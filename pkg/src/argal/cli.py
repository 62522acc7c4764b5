"""Command-line harness: run experiments, sweep clusterings, report, plot, serve.

Commands::

    argal run --config FILE [--force]
    argal sweep-clusters --config FILE
    argal report --runs DIR [DIR ...] [--thresholds 0.90,0.95,0.99,1.00]
    argal plot --runs DIR [DIR ...] --out FILE.svg
    argal serve --config FILE --port N

Exit status 0 on success, 2 on validation errors, 1 on runtime failures.
A run that dies mid-way leaves a FAILED marker file in its output directory.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from argal.clustering import SweepFailedError, reduce_2d, sweep_optimize
from argal.config import ConfigError, RunConfig, parse_config_text
from argal.engine import run_experiment, thresholds
from argal.reports import (
    fmt,
    read_baseline_csv,
    read_mean_curve_csv,
    render_learning_curves_svg,
    render_threshold_table,
    write_mean_curve_csv,
    write_run_artifact,
)

DEFAULT_PERCENTAGES = (0.90, 0.95, 0.99, 1.00)


def cmd_run(args: argparse.Namespace) -> int:
    config = RunConfig.from_file(args.config)
    if config.output is None:
        raise ConfigError("run needs an output directory", field="output")
    out_dir = config.output
    if out_dir.exists() and any(out_dir.iterdir()) and not args.force:
        print(f"error: output directory {out_dir} exists; use --force to overwrite", file=sys.stderr)
        return 2
    out_dir.mkdir(parents=True, exist_ok=True)
    failed_marker = out_dir / "FAILED"
    if failed_marker.exists():
        failed_marker.unlink()
    try:
        data = config.build_data()
        artifact = run_experiment(
            data,
            config.run_spec(),
            config.seeds,
            baseline=config.baseline_f1,
            checkpoint_dir=out_dir if config.save_checkpoints else None,
        )
        report = write_run_artifact(out_dir, artifact, config.raw_text)
    except Exception as exc:
        failed_marker.write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        raise
    print(f"run complete: baseline={artifact.baseline:.4f}")
    for p, samples in report.entries:
        print(f"  {int(round(p * 100))}%: {'not reached' if samples is None else samples}")
    print(f"artifact: {out_dir}")
    return 0


def cmd_sweep_clusters(args: argparse.Namespace) -> int:
    config = RunConfig.from_file(args.config)
    algorithms = config.sweep_algorithms or ("kmeans", "dbscan", "agglomerative")
    data = config.build_data()
    vectors = np.stack([data.sentence_vectors[item.id] for item in data.train_items])
    points = reduce_2d(
        vectors,
        reducer=config.reducer,
        external_path=config.reduced_points_path,
    )
    out_dir = config.output or Path.cwd()
    out_dir.mkdir(parents=True, exist_ok=True)
    status = 0
    for algorithm in algorithms:
        out_path = out_dir / f"sweep.{algorithm}.csv"
        try:
            result = sweep_optimize(points, algorithm, rng_seed=config.sweep_seed)
        except SweepFailedError as exc:
            out_path.with_suffix(".FAILED").write_text(str(exc) + "\n", encoding="utf-8")
            print(f"{algorithm}: sweep failed ({exc})", file=sys.stderr)
            status = 1
            continue
        with open(out_path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("metric,best_value\n")
            for metric, value in result.per_metric.items():
                handle.write(f"{metric},{fmt(value)}\n")
            handle.write(f"final,{fmt(float(result.final))}\n")
        print(f"{algorithm}: final parameter = {result.final} -> {out_path}")
    return status


def _load_run_dir(run_dir: Path) -> tuple[str, str, list[tuple[int, float]], float]:
    snapshot = run_dir / "config.snapshot"
    curve_path = run_dir / "curve.mean.csv"
    baseline_path = run_dir / "baseline.csv"
    for required in (snapshot, curve_path, baseline_path):
        if not required.exists():
            raise ConfigError(f"run artifact incomplete: missing {required}")
    values = parse_config_text(snapshot.read_text(encoding="utf-8"))
    model = values.get("model", "?")
    strategy = values.get("strategy", "?")
    return model, strategy, read_mean_curve_csv(curve_path), read_baseline_csv(baseline_path)


def cmd_report(args: argparse.Namespace) -> int:
    percentages = tuple(float(p) for p in args.thresholds.split(","))
    rows = []
    for run_dir in args.runs:
        model, strategy, curve, baseline = _load_run_dir(Path(run_dir))
        rows.append((model, strategy, thresholds(curve, baseline, percentages)))
    rows.sort(key=lambda r: (r[0], r[1]))
    table = render_threshold_table(rows, percentages)
    print(table, end="")
    if args.out:
        out = Path(args.out)
        with open(out, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("model,strategy,baseline," + ",".join(fmt(p) for p in percentages) + "\n")
            for model, strategy, report in rows:
                cells = [model, strategy, fmt(report.baseline)]
                for p in percentages:
                    samples = report.samples_at(p)
                    cells.append("not reached" if samples is None else str(samples))
                handle.write(",".join(cells) + "\n")
        print(f"wrote {out}")
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    curves = []
    baselines = []
    marks = []
    for run_dir in args.runs:
        model, strategy, curve, baseline = _load_run_dir(Path(run_dir))
        label = f"{model} / {strategy}"
        curves.append((label, curve))
        baselines.append(baseline)
        report = thresholds(curve, baseline, DEFAULT_PERCENTAGES)
        lookup = dict(curve)
        for _, samples in report.entries:
            if samples is not None:
                marks.append((samples, lookup[samples]))
    svg = render_learning_curves_svg(curves, baselines, marks)
    out = Path(args.out)
    out.write_text(svg, encoding="utf-8", newline="\n")
    csv_out = out.with_suffix(".csv")
    with open(csv_out, "w", encoding="utf-8", newline="") as handle:
        handle.write("label,labeled_count,dev_macro_f1\n")
        for label, curve in curves:
            for x, y in curve:
                handle.write(f"{label},{x},{fmt(y)}\n")
    print(f"wrote {out} and {csv_out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from argal.service import create_app

    config = RunConfig.from_file(args.config)
    static_dir = Path(args.ui) if args.ui else None
    app = create_app(config, base_dir=Path(args.config).parent, static_dir=static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="argal", description=__doc__.split("\n", 1)[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an active-learning experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--force", action="store_true", help="overwrite an existing output dir")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep-clusters", help="optimize clustering hyperparameters")
    p_sweep.add_argument("--config", required=True)
    p_sweep.set_defaults(func=cmd_sweep_clusters)

    p_report = sub.add_parser("report", help="threshold table from run artifacts")
    p_report.add_argument("--runs", nargs="+", required=True)
    p_report.add_argument("--thresholds", default="0.90,0.95,0.99,1.00")
    p_report.add_argument("--out", help="also write the table as CSV")
    p_report.set_defaults(func=cmd_report)

    p_plot = sub.add_parser("plot", help="learning-curve SVG from run artifacts")
    p_plot.add_argument("--runs", nargs="+", required=True)
    p_plot.add_argument("--out", required=True)
    p_plot.set_defaults(func=cmd_plot)

    p_serve = sub.add_parser("serve", help="start the annotation service")
    p_serve.add_argument("--config", required=True)
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--ui", help="directory with the built web UI to serve at /")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        field = f" (key: {exc.field})" if exc.field else ""
        print(f"error: {exc}{field}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
