import json
import sys

import pytest

from labelbudget.datasets import Dataset, generate_phantoms, load_manifest_file, manifest_to_bytes
from labelbudget.errors import GridError
from labelbudget.runner import (
    BASELINE_CELL,
    GridSpec,
    aggregate_median,
    expand_grid,
    grid_cells,
    run_grid,
)
from labelbudget.transforms import replay_provenance


def quiet(msg):
    pass


@pytest.fixture(scope="module")
def phantom_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("runner_ds")
    generate_phantoms(6, (12, 12, 12), seed=100, out_dir=root / "ds")
    return root / "ds"


def spec_for(phantom_dir, **kw):
    defaults = dict(
        dataset_dir=str(phantom_dir),
        axis="quality-diversity",
        diversity=(1.0,),
        completeness=(1.0,),
        quality=(100.0,),
        repeats=2,
        base_seed=7,
        trainer="builtin",
        max_epochs=6,
        patience=3,
    )
    defaults.update(kw)
    return GridSpec(**defaults)


# --- aggregate_median ---------------------------------------------------------


def test_median_odd():
    assert aggregate_median([0.1, 0.5, 0.2, 0.9, 0.3]) == 0.3


def test_median_single():
    assert aggregate_median([0.4]) == 0.4


def test_median_even_averages_center():
    assert aggregate_median([0.2, 0.4]) == pytest.approx(0.3)


def test_median_empty_rejected():
    with pytest.raises(GridError):
        aggregate_median([])


# --- grid expansion -------------------------------------------------------------


def test_product_count_with_baseline_in_grid(phantom_dir):
    spec = spec_for(
        phantom_dir,
        diversity=(0.25, 0.5, 1.0),
        quality=(75.0, 90.0, 100.0),
        repeats=5,
    )
    descs = expand_grid(spec, "ds", "digest")
    assert len(descs) == 45  # baseline (1.0, 1.0, 100) is already a product cell
    assert BASELINE_CELL in grid_cells(spec)


def test_baseline_appended_when_missing(phantom_dir):
    spec = spec_for(phantom_dir, diversity=(0.5,), quality=(75.0,), repeats=2)
    cells = grid_cells(spec)
    assert cells == [(0.5, 1.0, 75.0), BASELINE_CELL]
    assert len(expand_grid(spec, "ds", "digest")) == 4


def test_repeats_one(phantom_dir):
    spec = spec_for(phantom_dir, repeats=1)
    assert len(expand_grid(spec, "ds", "digest")) == 1


def test_expansion_deterministic(phantom_dir):
    spec = spec_for(phantom_dir, diversity=(0.5, 1.0), quality=(90.0, 100.0))
    a = expand_grid(spec, "ds", "digest")
    b = expand_grid(spec, "ds", "digest")
    assert a == b


def test_adding_cells_keeps_existing_seeds(phantom_dir):
    small = spec_for(phantom_dir, diversity=(0.5, 1.0))
    large = spec_for(phantom_dir, diversity=(0.25, 0.5, 1.0))
    seeds_small = {
        (d.diversity, d.completeness, d.quality_target, d.repeat): d.seed
        for d in expand_grid(small, "ds", "digest")
    }
    seeds_large = {
        (d.diversity, d.completeness, d.quality_target, d.repeat): d.seed
        for d in expand_grid(large, "ds", "digest")
    }
    for key, seed in seeds_small.items():
        assert seeds_large[key] == seed


def test_baseline_cell_is_axis_invariant(phantom_dir):
    """The normalization cell's runs hash identically whatever axis the grid
    sweeps, so its cached results are shared across grids."""
    qd = spec_for(phantom_dir, axis="quality-diversity", diversity=(0.5, 1.0))
    dc = spec_for(phantom_dir, axis="diversity-completeness", completeness=(0.5, 1.0))

    def baseline_hashes(spec):
        return {
            d.repeat: d.run_hash
            for d in expand_grid(spec, "ds", "digest")
            if d.cell() == BASELINE_CELL
        }

    assert baseline_hashes(qd) == baseline_hashes(dc)


def test_grid_spec_validation(phantom_dir):
    with pytest.raises(GridError):
        spec_for(phantom_dir, axis="bogus")
    with pytest.raises(GridError):
        spec_for(phantom_dir, repeats=0)
    with pytest.raises(GridError):
        spec_for(phantom_dir, diversity=())
    with pytest.raises(GridError):
        spec_for(phantom_dir, quality=(101.0,))
    with pytest.raises(GridError):
        spec_for(phantom_dir, diversity=(0.0,))


# --- run_grid with the builtin trainer ----------------------------------------------


def test_run_grid_baseline_normalizes_to_one(phantom_dir, tmp_path):
    spec = spec_for(phantom_dir, diversity=(0.5, 1.0))
    result = run_grid(spec, tmp_path / "out", log=quiet)
    baseline = [c for c in result.cells if (c.diversity, c.completeness,
                                            c.quality_target) == BASELINE_CELL]
    assert len(baseline) == 1
    assert baseline[0].perf_norm == 1.0
    assert baseline[0].quality_achieved_pct == 100.0
    assert result.n_trained == 4
    assert result.n_cached == 0
    assert (tmp_path / "out" / "runs.csv").is_file()
    assert (tmp_path / "out" / "aggregated.csv").is_file()


def test_rerun_hits_cache_and_reproduces_bytes(phantom_dir, tmp_path):
    spec = spec_for(phantom_dir, diversity=(0.5, 1.0))
    out = tmp_path / "out"
    first = run_grid(spec, out, log=quiet)
    runs_bytes = first.runs_csv.read_bytes()
    agg_bytes = first.aggregated_csv.read_bytes()

    second = run_grid(spec, out, log=quiet)
    assert second.n_trained == 0
    assert second.n_cached == len(first.records)
    assert second.runs_csv.read_bytes() == runs_bytes
    assert second.aggregated_csv.read_bytes() == agg_bytes


def test_cache_hit_equals_fresh_recomputation(phantom_dir, tmp_path):
    spec = spec_for(phantom_dir)
    out = tmp_path / "out"
    first = run_grid(spec, out, log=quiet)
    target = first.records[0]
    cache_file = out / "cache" / f"{target.descriptor.run_hash}.json"
    cached_doc = json.loads(cache_file.read_text())
    cache_file.unlink()

    second = run_grid(spec, out, log=quiet)
    assert second.n_trained == 1
    fresh_doc = json.loads(cache_file.read_text())
    assert fresh_doc == cached_doc


def test_parallel_execution_matches_serial(phantom_dir, tmp_path):
    spec = spec_for(phantom_dir, diversity=(0.5, 1.0))
    serial = run_grid(spec, tmp_path / "serial", log=quiet)
    parallel = run_grid(spec, tmp_path / "parallel", jobs=4, log=quiet)
    assert serial.runs_csv.read_bytes() == parallel.runs_csv.read_bytes()
    assert serial.aggregated_csv.read_bytes() == parallel.aggregated_csv.read_bytes()


def test_cell_with_impossible_transform_fails_but_grid_survives(phantom_dir, tmp_path):
    # diversity 0.2 of 4 trainval volumes leaves one volume: train/val split
    # is impossible, every seed of that cell fails, the cell goes invalid
    spec = spec_for(phantom_dir, diversity=(0.2, 1.0))
    result = run_grid(spec, tmp_path / "out", log=quiet)
    bad = [c for c in result.cells if c.diversity == 0.2][0]
    assert not bad.valid
    assert bad.perf_norm is None
    assert bad.n_seeds == 0
    good = [c for c in result.cells if c.diversity == 1.0][0]
    assert good.valid


# --- failure policy with a flaky external trainer --------------------------------------


def flaky_trainer_cmd(tmp_path, fail_first_n):
    counter = tmp_path / "invocations.txt"
    script = tmp_path / "flaky.py"
    script.write_text(
        "import json, sys, pathlib\n"
        "req = json.loads(sys.stdin.readline())\n"
        f"counter = pathlib.Path({str(counter)!r})\n"
        "n = int(counter.read_text()) if counter.exists() else 0\n"
        "counter.write_text(str(n + 1))\n"
        f"if n < {fail_first_n}:\n"
        "    print('synthetic failure', file=sys.stderr)\n"
        "    sys.exit(1)\n"
        "print(json.dumps({'event': 'epoch', 'epoch': 1, 'val_iou': 0.5}), flush=True)\n"
        "print(json.dumps({'event': 'done', 'test_iou': 0.5, 'best_epoch': 1}), flush=True)\n"
    )
    return f"{sys.executable} {script}"


def test_three_of_five_seeds_keep_the_cell(phantom_dir, tmp_path):
    cmd = flaky_trainer_cmd(tmp_path, fail_first_n=2)
    spec = spec_for(phantom_dir, trainer=cmd, repeats=5)
    result = run_grid(spec, tmp_path / "out", log=quiet)
    cell = result.cells[0]
    assert cell.valid
    assert cell.n_seeds == 3
    assert cell.perf_norm == 1.0


def test_fewer_than_three_seeds_invalidate_the_cell(phantom_dir, tmp_path):
    # descriptor order: the 0.5 cell's five runs execute first and three fail
    cmd = flaky_trainer_cmd(tmp_path, fail_first_n=3)
    spec = spec_for(phantom_dir, diversity=(0.5, 1.0), trainer=cmd, repeats=5)
    result = run_grid(spec, tmp_path / "out", log=quiet)
    degraded = [c for c in result.cells if c.diversity == 0.5][0]
    assert not degraded.valid
    assert degraded.n_seeds == 2
    baseline = [c for c in result.cells if c.diversity == 1.0][0]
    assert baseline.valid and baseline.n_seeds == 5


def test_failed_baseline_raises(phantom_dir, tmp_path):
    cmd = flaky_trainer_cmd(tmp_path, fail_first_n=100)
    spec = spec_for(phantom_dir, trainer=cmd, repeats=2)
    with pytest.raises(GridError, match="baseline"):
        run_grid(spec, tmp_path / "out", log=quiet)


# --- provenance of materialized run datasets ---------------------------------------------


def test_materialized_train_manifest_replays_byte_identically(phantom_dir, tmp_path):
    cmd = flaky_trainer_cmd(tmp_path, fail_first_n=0)
    spec = spec_for(phantom_dir, quality=(75.0,), repeats=1, trainer=cmd)
    result = run_grid(spec, tmp_path / "out", log=quiet)
    non_baseline = [
        r for r in result.records if r.descriptor.quality_target == 75.0
    ][0]
    run_dir = tmp_path / "out" / "runs" / non_baseline.descriptor.run_hash
    train = load_manifest_file(run_dir / "train.json")

    ops = [rec.op for rec in train.manifest.provenance]
    assert ops == [
        "split_test", "sample_diversity", "sample_completeness",
        "degrade_quality", "split_train_val", "upsample_train", "rebase",
    ]

    original = Dataset.load(phantom_dir)
    replayed = replay_provenance(original, train.manifest.provenance, run_dir)
    assert manifest_to_bytes(replayed.manifest) == manifest_to_bytes(train.manifest)
    assert train.manifest.training_slices is not None
