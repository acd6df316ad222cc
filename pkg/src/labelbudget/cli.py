"""Command-line surface.

Subcommands: ingest, synth, run, analyze, plot, plan. Exit codes: 0 on
success, 1 on a domain error (bad data, invalid grid, unusable results),
2 on usage errors (argparse's convention).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .analysis import PerfPoint, importance_curves, optimal_trajectory
from .datasets import generate_phantoms, ingest_slice_stack
from .errors import GridError, LabelBudgetError
from .planner import current_quality, recommend_next, sweep_curves
from .plots import importance_plot, saturation_plot, scatter_with_trajectory
from .runner import AggregatedRow, GridSpec, read_aggregated_csv, run_grid, _fmt
from . import _kernels

AXIS_CHOICES = ("qd", "dc")


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("dims must be N or NX,NY,NZ")
    return tuple(parts)  # type: ignore[return-value]


def load_grid_file(path: str | Path) -> GridSpec:
    """Grid config: a TOML file with keys dataset, axis, diversity,
    completeness, quality, repeats, seed, trainer (plus optional max_epochs,
    patience, learning_rate, test_fraction, test_seed). The dataset path is
    resolved relative to the file."""
    path = Path(path)
    if not path.is_file():
        raise GridError(f"grid file {path} does not exist")
    try:
        doc = tomllib.loads(path.read_text("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise GridError(f"{path}: invalid TOML: {exc}") from exc
    try:
        dataset = path.parent / doc.pop("dataset")
        axis = doc.pop("axis")
    except KeyError as exc:
        raise GridError(f"{path}: missing required key {exc}") from exc

    kwargs = dict(dataset_dir=str(dataset), axis=axis)
    for key, target in [
        ("diversity", "diversity"), ("completeness", "completeness"),
        ("quality", "quality"),
    ]:
        if key in doc:
            values = doc.pop(key)
            if not isinstance(values, list):
                raise GridError(f"{path}: {key} must be a list")
            kwargs[target] = tuple(float(v) for v in values)
    for key, target, cast in [
        ("repeats", "repeats", int), ("seed", "base_seed", int),
        ("trainer", "trainer", str), ("max_epochs", "max_epochs", int),
        ("patience", "patience", int), ("learning_rate", "learning_rate", float),
        ("test_fraction", "test_fraction", float), ("test_seed", "test_seed", int),
    ]:
        if key in doc:
            kwargs[target] = cast(doc.pop(key))
    if doc:
        raise GridError(f"{path}: unknown keys {sorted(doc)}")
    return GridSpec(**kwargs)


def rows_to_points(rows: list[AggregatedRow], axis: str) -> list[PerfPoint]:
    points = []
    for r in rows:
        if not r.valid:
            continue
        effort = r.effort_qd if axis == "qd" else r.effort_dc
        if effort is None:
            continue
        points.append(
            PerfPoint(
                effort=effort,
                perf_norm=r.perf_norm,
                diversity=r.diversity,
                completeness=r.completeness,
                quality_pct=r.quality_achieved_pct if r.quality_achieved_pct is not None else 100.0,
                label=f"d={r.diversity:g},c={r.completeness:g},q={r.quality_achieved_pct:g}",
            )
        )
    if not points:
        raise GridError("no valid result rows to analyze")
    return points


# --- subcommand bodies ------------------------------------------------------------


def cmd_ingest(args) -> int:
    ds = ingest_slice_stack(args.src, args.dataset_id, args.out)
    print(f"ingested {len(ds.manifest.entries)} volumes into {args.out}")
    return 0


def cmd_synth(args) -> int:
    ds = generate_phantoms(args.n, args.dims, args.seed, args.out,
                           dataset_id=args.dataset_id)
    labeled = ds.manifest.labeled_count()
    print(f"generated {len(ds.manifest.entries)} phantoms "
          f"({labeled} labeled slices) into {args.out}")
    return 0


def cmd_run(args) -> int:
    spec = load_grid_file(args.grid)
    result = run_grid(spec, args.out, jobs=args.jobs)
    n_failed = sum(1 for r in result.records if r.status != "ok")
    print(f"{len(result.records)} runs: {result.n_trained} trained, "
          f"{result.n_cached} cached, {n_failed} failed")
    print(f"results: {result.runs_csv}")
    print(f"aggregated: {result.aggregated_csv}")
    return 0


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def cmd_analyze(args) -> int:
    rows = read_aggregated_csv(args.results)
    points = rows_to_points(rows, args.axis)
    trajectory = optimal_trajectory(points)
    curves = importance_curves(trajectory)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    _write_csv(
        out / "trajectory.csv",
        ["effort", "perf_norm", "diversity", "completeness", "quality_achieved", "cell"],
        [
            [_fmt(v.effort), _fmt(v.perf_norm), _fmt(v.diversity),
             _fmt(v.completeness), _fmt(v.quality_pct), v.label]
            for v in trajectory.vertices
        ],
    )
    _write_csv(
        out / "importance.csv",
        ["lever", "perf_norm", "value"],
        [
            [lever, _fmt(p), _fmt(v)]
            for lever in ("quality", "diversity", "completeness")
            for p, v in curves[lever]
        ],
    )
    saturation_rows = []
    for lever in ("diversity", "completeness", "quality"):
        for group, curve in sweep_curves(rows, lever).items():
            if len(curve) >= args.window + 1:
                from .analysis import detect_saturation

                sat = detect_saturation(curve, epsilon=args.epsilon, window=args.window)
            else:
                sat = None
            saturation_rows.append([lever, group, _fmt(sat) if sat is not None else ""])
    _write_csv(out / "saturation.csv", ["lever", "group", "saturation_value"],
               saturation_rows)

    print(f"trajectory: {len(trajectory.vertices)} vertices -> {out / 'trajectory.csv'}")
    print(f"importance + saturation written to {out}")
    return 0


def cmd_plot(args) -> int:
    rows = read_aggregated_csv(args.results)
    points = rows_to_points(rows, args.axis)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    (out / "scatter_trajectory.svg").write_text(
        scatter_with_trajectory(points, args.axis), "utf-8"
    )
    trajectory = optimal_trajectory(points)
    (out / "importance.svg").write_text(
        importance_plot(importance_curves(trajectory)), "utf-8"
    )
    lever = "diversity" if args.axis == "dc" else "quality"
    sweeps = sweep_curves(rows, lever)
    if sweeps:
        (out / "saturation.svg").write_text(
            saturation_plot(sweeps, lever, epsilon=args.epsilon, window=args.window),
            "utf-8",
        )
    print(f"plots written to {out}")
    return 0


def cmd_plan(args) -> int:
    rows = read_aggregated_csv(args.results)
    quality = args.quality if args.quality is not None else current_quality(rows)
    curves = sweep_curves(rows, "diversity")
    rec = recommend_next(
        quality,
        curves,
        quality_threshold=args.quality_threshold,
        epsilon=args.epsilon,
        window=args.window,
    )
    print(json.dumps(rec.to_doc(), indent=2, sort_keys=True))
    return 0


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelbudget",
        description=(
            "Simulate segmentation-labeling strategies on volumetric datasets "
            "and compute the optimal labeling trajectory."
        ),
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__import__('labelbudget').__version__} "
                                f"(kernels: {_kernels.BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a directory of PGM slice stacks")
    p.add_argument("--src", required=True, help="directory of per-volume slice stacks")
    p.add_argument("--dataset-id", required=True)
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate an ellipsoid phantom dataset")
    p.add_argument("--n", type=int, required=True, help="number of volumes")
    p.add_argument("--dims", type=_parse_dims, required=True, help="N or NX,NY,NZ")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset-id", default="phantoms")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="execute an experiment grid")
    p.add_argument("--grid", required=True, help="grid config TOML")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="trajectory, importance, and saturation CSVs")
    p.add_argument("results", help="aggregated results CSV")
    p.add_argument("--axis", choices=AXIS_CHOICES, default="qd",
                   help="effort definition: qd (quality x diversity) or "
                        "dc (diversity x completeness)")
    p.add_argument("--out", default="analysis")
    p.add_argument("--epsilon", type=float, default=0.01,
                   help="saturation threshold as a fraction of peak performance")
    p.add_argument("--window", type=int, default=2,
                   help="consecutive low-gain steps required for saturation")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plot", help="emit SVG plots from aggregated results")
    p.add_argument("results", help="aggregated results CSV")
    p.add_argument("--axis", choices=AXIS_CHOICES, default="qd")
    p.add_argument("--out", default="plots")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--window", type=int, default=2)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("plan", help="recommend the next labeling action")
    p.add_argument("--results", required=True, help="aggregated results CSV")
    p.add_argument("--quality", type=float, default=None,
                   help="override the achieved label quality percent")
    p.add_argument("--quality-threshold", type=float, default=90.0)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--window", type=int, default=2)
    p.set_defaults(func=cmd_plan)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LabelBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
