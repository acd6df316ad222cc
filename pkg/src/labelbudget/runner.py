"""Grid expansion, execution with seed repetition, caching, and the results
tables.

Every grid cell (diversity, completeness, quality target) runs `repeats`
times with seeds derived from a stable hash of the cell values, so extending
a grid never reshuffles the seeds of existing cells. Completed runs are
cached by a content hash; re-running a finished grid performs no training.
Cells aggregate by the exact median of their successful seeds and normalize
against the unaltered cell (diversity 1, completeness 1, quality 100), which
every expansion includes.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import statistics
import sys
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable, Sequence

from .datasets import Dataset, manifest_to_bytes
from .effort import effort_dc, effort_qd
from .errors import GridError, LabelBudgetError
from .protocol import run_external
from .rng import derive_seed
from .training import TrainConfig, run_builtin
from .transforms import (
    LabelingConfig,
    apply_quality,
    attach_training_slices,
    rebase,
    sample_completeness,
    sample_diversity,
    split_test,
    split_train_val,
    step_for_target_quality,
)

AXES = ("quality-diversity", "diversity-completeness", "quality-sweep", "diversity-sweep")

BASELINE_CELL = (1.0, 1.0, 100.0)

RUNS_CSV_COLUMNS = [
    "dataset_id", "axis", "diversity", "completeness", "quality_target",
    "quality_achieved", "slice_step", "seed", "perf_raw", "best_epoch", "status",
]
AGG_CSV_COLUMNS = [
    "dataset_id", "axis", "diversity", "completeness", "quality_achieved",
    "effort_qd", "effort_dc", "perf_raw_median", "perf_norm", "n_seeds",
]

MIN_SEEDS_WITH_FAILURES = 3


@dataclass(frozen=True)
class GridSpec:
    dataset_dir: str
    axis: str
    diversity: tuple[float, ...] = (1.0,)
    completeness: tuple[float, ...] = (1.0,)
    quality: tuple[float, ...] = (100.0,)
    repeats: int = 5
    base_seed: int = 0
    trainer: str = "builtin"
    max_epochs: int = 100
    patience: int = 10
    learning_rate: float = 3e-4
    test_fraction: float = 0.2
    test_seed: int = 0

    def __post_init__(self):
        if self.axis not in AXES:
            raise GridError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.repeats < 1:
            raise GridError("repeats must be >= 1")
        for name, values, lo, hi, open_lo in (
            ("diversity", self.diversity, 0.0, 1.0, True),
            ("completeness", self.completeness, 0.0, 1.0, True),
            ("quality", self.quality, 0.0, 100.0, False),
        ):
            if not values:
                raise GridError(f"{name} value list is empty")
            for v in values:
                if (open_lo and not (lo < v <= hi)) or (not open_lo and not (lo <= v <= hi)):
                    raise GridError(f"{name} value {v} outside its domain")


@dataclass(frozen=True)
class RunDescriptor:
    dataset_id: str
    axis: str
    diversity: float
    completeness: float
    quality_target: float
    repeat: int
    seed: int
    trainer: str
    run_hash: str

    def cell(self) -> tuple[float, float, float]:
        return (self.diversity, self.completeness, self.quality_target)

    def cell_id(self) -> str:
        return f"d={self.diversity:g},c={self.completeness:g},q={self.quality_target:g}"


@dataclass
class RunRecord:
    descriptor: RunDescriptor
    status: str  # "ok" | "failed"
    perf_raw: float | None = None
    best_epoch: int | None = None
    quality_achieved_pct: float | None = None
    slice_step: int | None = None
    val_history: tuple[float, ...] = ()
    error: str | None = None

    def to_doc(self) -> dict:
        doc = asdict(self)
        doc["descriptor"] = asdict(self.descriptor)
        doc["val_history"] = list(self.val_history)
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "RunRecord":
        desc = RunDescriptor(**doc["descriptor"])
        return cls(
            descriptor=desc,
            status=doc["status"],
            perf_raw=doc["perf_raw"],
            best_epoch=doc["best_epoch"],
            quality_achieved_pct=doc["quality_achieved_pct"],
            slice_step=doc["slice_step"],
            val_history=tuple(doc["val_history"]),
            error=doc.get("error"),
        )


@dataclass(frozen=True)
class CellAggregate:
    dataset_id: str
    axis: str
    diversity: float
    completeness: float
    quality_target: float
    quality_achieved_pct: float | None
    perf_raw_median: float | None
    perf_norm: float | None
    n_seeds: int
    valid: bool


@dataclass
class GridResult:
    records: list[RunRecord]
    cells: list[CellAggregate]
    n_trained: int
    n_cached: int
    runs_csv: Path
    aggregated_csv: Path


def aggregate_median(values: Sequence[float]) -> float:
    """Exact median; even-sized inputs average the two central values."""
    if not values:
        raise GridError("cannot take the median of an empty list")
    return float(statistics.median(values))


def _cell_key(cell: tuple[float, float, float]) -> str:
    return f"{cell[0]!r}|{cell[1]!r}|{cell[2]!r}"


def _run_seed(base_seed: int, cell: tuple[float, float, float], repeat: int) -> int:
    return derive_seed("run-seed", base_seed, _cell_key(cell), repeat)


def _run_hash(spec: GridSpec, dataset_id: str, dataset_digest: str,
              cell: tuple[float, float, float], repeat: int, seed: int) -> str:
    doc = {
        "dataset_id": dataset_id,
        "dataset_digest": dataset_digest,
        "diversity": cell[0],
        "completeness": cell[1],
        "quality_target": cell[2],
        "repeat": repeat,
        "seed": seed,
        "trainer": spec.trainer,
        "max_epochs": spec.max_epochs,
        "patience": spec.patience,
        "learning_rate": spec.learning_rate,
        "test_fraction": spec.test_fraction,
        "test_seed": spec.test_seed,
    }
    blob = json.dumps(doc, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def grid_cells(spec: GridSpec) -> list[tuple[float, float, float]]:
    cells = [
        (float(d), float(c), float(q))
        for d in spec.diversity
        for c in spec.completeness
        for q in spec.quality
    ]
    if BASELINE_CELL not in cells:
        cells.append(BASELINE_CELL)
    return cells


def expand_grid(spec: GridSpec, dataset_id: str, dataset_digest: str
                ) -> list[RunDescriptor]:
    """All run descriptors of the grid: cells x repeats, baseline included."""
    descriptors = []
    for cell in grid_cells(spec):
        for repeat in range(spec.repeats):
            seed = _run_seed(spec.base_seed, cell, repeat)
            descriptors.append(
                RunDescriptor(
                    dataset_id=dataset_id,
                    axis=spec.axis,
                    diversity=cell[0],
                    completeness=cell[1],
                    quality_target=cell[2],
                    repeat=repeat,
                    seed=seed,
                    trainer=spec.trainer,
                    run_hash=_run_hash(spec, dataset_id, dataset_digest, cell, repeat, seed),
                )
            )
    return descriptors


def execute_run(ds: Dataset, spec: GridSpec, desc: RunDescriptor,
                run_dir: Path) -> RunRecord:
    """One full experiment: transform, split, upsample, train, evaluate."""
    try:
        cell = LabelingConfig(
            diversity=desc.diversity,
            completeness=desc.completeness,
            quality_target=desc.quality_target,
            slice_step=None,
            seed=desc.seed,
        )
        trainval, test = split_test(ds, spec.test_fraction, spec.test_seed)
        original_count = trainval.manifest.labeled_count()

        d_ds = sample_diversity(trainval, cell.diversity, derive_seed(cell.seed, "diversity"))
        c_ds = sample_completeness(d_ds, cell.completeness, derive_seed(cell.seed, "completeness"))

        if cell.quality_target >= 100.0:
            step = 1
        else:
            step, _ = step_for_target_quality(c_ds, cell.quality_target)
        q_ds, report = apply_quality(c_ds, step, run_dir)

        train_ds, val_ds = split_train_val(q_ds, derive_seed(cell.seed, "split"))
        train_ds = attach_training_slices(train_ds, original_count)

        config = TrainConfig(
            seed=derive_seed(cell.seed, "train"),
            max_epochs=spec.max_epochs,
            patience=spec.patience,
            learning_rate=spec.learning_rate,
            trainer=spec.trainer,
        )
        if spec.trainer == "builtin":
            result = run_builtin(train_ds, val_ds, test, config)
        else:
            run_dir.mkdir(parents=True, exist_ok=True)
            paths = {}
            for name, part in (("train", train_ds), ("val", val_ds), ("test", test)):
                part = rebase(part, run_dir)
                path = run_dir / f"{name}.json"
                path.write_bytes(manifest_to_bytes(part.manifest))
                paths[name] = path
            result = run_external(
                spec.trainer, paths["train"], paths["val"], paths["test"], config
            )

        return RunRecord(
            descriptor=desc,
            status="ok",
            perf_raw=result.test_perf,
            best_epoch=result.best_epoch,
            quality_achieved_pct=report.achieved_pct,
            slice_step=report.slice_step,
            val_history=result.val_history,
        )
    except LabelBudgetError as exc:
        return RunRecord(descriptor=desc, status="failed", error=str(exc))


class RunCache:
    """One JSON file per run hash under <out_dir>/cache."""

    def __init__(self, cache_dir: Path):
        self.cache_dir = cache_dir
        cache_dir.mkdir(parents=True, exist_ok=True)

    def path(self, run_hash: str) -> Path:
        return self.cache_dir / f"{run_hash}.json"

    def get(self, run_hash: str) -> RunRecord | None:
        path = self.path(run_hash)
        if not path.is_file():
            return None
        return RunRecord.from_doc(json.loads(path.read_text("utf-8")))

    def put(self, record: RunRecord) -> None:
        path = self.path(record.descriptor.run_hash)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(record.to_doc(), sort_keys=True), "utf-8")
        tmp.replace(path)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_runs_csv(path: Path, records: Sequence[RunRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUNS_CSV_COLUMNS)
        for r in records:
            d = r.descriptor
            writer.writerow([
                d.dataset_id, d.axis, _fmt(d.diversity), _fmt(d.completeness),
                _fmt(d.quality_target), _fmt(r.quality_achieved_pct),
                _fmt(r.slice_step), _fmt(d.seed), _fmt(r.perf_raw),
                _fmt(r.best_epoch), r.status,
            ])


def write_aggregated_csv(path: Path, cells: Sequence[CellAggregate]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGG_CSV_COLUMNS)
        for c in cells:
            eff_qd = (
                effort_qd(c.diversity, c.quality_achieved_pct)
                if c.quality_achieved_pct is not None
                else None
            )
            writer.writerow([
                c.dataset_id, c.axis, _fmt(c.diversity), _fmt(c.completeness),
                _fmt(c.quality_achieved_pct), _fmt(eff_qd),
                _fmt(effort_dc(c.diversity, c.completeness)),
                _fmt(c.perf_raw_median), _fmt(c.perf_norm), _fmt(c.n_seeds),
            ])


@dataclass(frozen=True)
class AggregatedRow:
    """One row of the aggregated CSV, as read back from disk."""

    dataset_id: str
    axis: str
    diversity: float
    completeness: float
    quality_achieved_pct: float | None
    effort_qd: float | None
    effort_dc: float
    perf_raw_median: float | None
    perf_norm: float | None
    n_seeds: int

    @property
    def valid(self) -> bool:
        return self.perf_norm is not None


def _parse_opt_float(text: str) -> float | None:
    return float(text) if text != "" else None


def read_aggregated_csv(path: str | Path) -> list[AggregatedRow]:
    path = Path(path)
    if not path.is_file():
        raise GridError(f"results file {path} does not exist")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != AGG_CSV_COLUMNS:
            raise GridError(
                f"{path}: expected aggregated results columns {AGG_CSV_COLUMNS}, "
                f"found {header}"
            )
        rows = []
        for rec in reader:
            rows.append(
                AggregatedRow(
                    dataset_id=rec[0],
                    axis=rec[1],
                    diversity=float(rec[2]),
                    completeness=float(rec[3]),
                    quality_achieved_pct=_parse_opt_float(rec[4]),
                    effort_qd=_parse_opt_float(rec[5]),
                    effort_dc=float(rec[6]),
                    perf_raw_median=_parse_opt_float(rec[7]),
                    perf_norm=_parse_opt_float(rec[8]),
                    n_seeds=int(rec[9]),
                )
            )
    return rows


def aggregate_cells(records: Sequence[RunRecord]) -> list[CellAggregate]:
    by_cell: dict[tuple[float, float, float], list[RunRecord]] = {}
    order: list[tuple[float, float, float]] = []
    for r in records:
        cell = r.descriptor.cell()
        if cell not in by_cell:
            by_cell[cell] = []
            order.append(cell)
        by_cell[cell].append(r)

    baseline_median: float | None = None
    rough: list[CellAggregate] = []
    for cell in order:
        runs = by_cell[cell]
        oks = [r for r in runs if r.status == "ok"]
        valid = len(oks) == len(runs) or len(oks) >= MIN_SEEDS_WITH_FAILURES
        perf_median = aggregate_median([r.perf_raw for r in oks]) if valid and oks else None
        achieved = (
            aggregate_median([r.quality_achieved_pct for r in oks]) if valid and oks else None
        )
        sample = runs[0].descriptor
        rough.append(
            CellAggregate(
                dataset_id=sample.dataset_id,
                axis=sample.axis,
                diversity=cell[0],
                completeness=cell[1],
                quality_target=cell[2],
                quality_achieved_pct=achieved,
                perf_raw_median=perf_median,
                perf_norm=None,
                n_seeds=len(oks),
                valid=valid and bool(oks),
            )
        )
        if cell == BASELINE_CELL and valid and perf_median is not None:
            baseline_median = perf_median

    if baseline_median is None or baseline_median <= 0.0:
        raise GridError(
            "the unaltered baseline cell failed; nothing can be normalized"
        )

    cells = []
    for c in rough:
        perf_norm = (
            c.perf_raw_median / baseline_median if c.perf_raw_median is not None else None
        )
        cells.append(
            CellAggregate(
                dataset_id=c.dataset_id, axis=c.axis, diversity=c.diversity,
                completeness=c.completeness, quality_target=c.quality_target,
                quality_achieved_pct=c.quality_achieved_pct,
                perf_raw_median=c.perf_raw_median, perf_norm=perf_norm,
                n_seeds=c.n_seeds, valid=c.valid,
            )
        )
    return cells


def run_grid(spec: GridSpec, out_dir: str | Path, jobs: int = 1,
             log: Callable[[str], None] | None = None) -> GridResult:
    """Execute (or reload from cache) every run of the grid and persist the
    raw and aggregated results tables."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = Dataset.load(spec.dataset_dir)
    digest = hashlib.sha256(manifest_to_bytes(ds.manifest)).hexdigest()[:16]
    descriptors = expand_grid(spec, ds.manifest.dataset_id, digest)
    cache = RunCache(out_dir / "cache")

    say = log or (lambda msg: print(msg, file=sys.stderr))

    records: dict[str, RunRecord] = {}
    pending: list[RunDescriptor] = []
    for desc in descriptors:
        hit = cache.get(desc.run_hash)
        if hit is not None:
            records[desc.run_hash] = hit
        else:
            pending.append(desc)

    def job(desc: RunDescriptor) -> RunRecord:
        record = execute_run(ds, spec, desc, out_dir / "runs" / desc.run_hash)
        cache.put(record)
        return record

    if pending:
        say(f"{len(pending)} runs to execute, {len(records)} cached")
        if jobs > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
                for desc, record in zip(pending, pool.map(job, pending)):
                    records[desc.run_hash] = record
                    say(f"  {desc.cell_id()} repeat={desc.repeat}: {record.status}")
        else:
            for desc in pending:
                record = job(desc)
                records[desc.run_hash] = record
                say(f"  {desc.cell_id()} repeat={desc.repeat}: {record.status}")
    else:
        say(f"all {len(records)} runs cached, nothing to execute")

    ordered = [records[d.run_hash] for d in descriptors]
    cells = aggregate_cells(ordered)

    runs_csv = out_dir / "runs.csv"
    aggregated_csv = out_dir / "aggregated.csv"
    write_runs_csv(runs_csv, ordered)
    write_aggregated_csv(aggregated_csv, cells)

    return GridResult(
        records=ordered,
        cells=cells,
        n_trained=len(pending),
        n_cached=len(descriptors) - len(pending),
        runs_csv=runs_csv,
        aggregated_csv=aggregated_csv,
    )
