"""Acceptance suite: every criterion at its stated tolerance, one printed
pass/fail line each. Run with `pytest tests/test_acceptance.py -v -s`.

The end-to-end criteria run a full phantom grid once per session (shared by
the qualitative-shape and idempotence checks); everything is seeded, so the
asserted numbers are reproducible bit-for-bit.
"""

import importlib.util
import json
import random
import sys

import numpy as np
import pytest

from labelbudget import _kernels
from labelbudget.analysis import (
    PerfPoint,
    detect_saturation,
    importance_curves,
    optimal_trajectory,
    upper_hull,
)
from labelbudget.datasets import generate_phantoms, manifest_to_bytes
from labelbudget.effort import effort_dc, effort_qd
from labelbudget.metrics import iou
from labelbudget.runner import BASELINE_CELL, GridSpec, run_grid
from labelbudget.training import TrainConfig, run_builtin
from labelbudget.transforms import (
    attach_training_slices,
    degrade_quality,
    rebase,
    split_test,
    split_train_val,
)
from labelbudget.volumes import LabelMask


def report(name: str, passed: bool = True):
    print(f"\nACCEPTANCE {name}: {'PASS' if passed else 'FAIL'}")


# --- effort formulas (exact) --------------------------------------------------------


def test_effort_formulas_exact():
    assert effort_qd(0.1, 80.0) == 0.08
    assert effort_dc(0.6, 0.1) == 0.06
    report("effort formulas (0.1,80)->0.08 and (0.6,0.1)->0.06 exact")


# --- IoU oracle equivalence ----------------------------------------------------------


def test_iou_matches_brute_force_on_500_random_pairs():
    rng = np.random.default_rng(2025)
    for trial in range(500):
        density_a, density_b = rng.random(2) * 0.9 + 0.05
        a = (rng.random((4, 8, 8)) < density_a).astype(np.uint8)
        b = (rng.random((4, 8, 8)) < density_b).astype(np.uint8)
        va = set(map(tuple, np.argwhere(a > 0)))
        vb = set(map(tuple, np.argwhere(b > 0)))
        oracle = 1.0 if not va and not vb else len(va & vb) / len(va | vb)
        got = iou(LabelMask(voxels=a), LabelMask(voxels=b))
        assert abs(got - oracle) <= 1e-12
        assert iou(LabelMask(voxels=b), LabelMask(voxels=a)) == got
        assert iou(LabelMask(voxels=a), LabelMask(voxels=a)) == 1.0
    disjoint_a = np.zeros((4, 8, 8), dtype=np.uint8)
    disjoint_b = np.zeros((4, 8, 8), dtype=np.uint8)
    disjoint_a[0, 0, 0] = 1
    disjoint_b[3, 7, 7] = 1
    assert iou(LabelMask(voxels=disjoint_a), LabelMask(voxels=disjoint_b)) == 0.0
    report("IoU equals brute-force set oracle on 500 random 8x8x4 pairs (1e-12)")


# --- interpolation oracle --------------------------------------------------------------


def test_interpolation_achieved_iou_exact_and_decreasing(tmp_path):
    ds = generate_phantoms(10, (32, 32, 32), seed=42, out_dir=tmp_path / "ds")
    pooled_at_step = {}
    for step in (1, 2, 4, 8):
        inter = union = 0
        for e in ds.manifest.entries:
            _, mask = ds.load_volume(e.volume_id)
            out, rep = degrade_quality(mask, e.labeled_slices, step)
            first, last = e.labeled_slices[0], e.labeled_slices[-1]
            recomputed = iou(out.voxels[first:last + 1], mask.voxels[first:last + 1])
            assert rep.achieved_iou == recomputed  # exact equality
            va = set(map(tuple, np.argwhere(out.voxels[first:last + 1] > 0)))
            vb = set(map(tuple, np.argwhere(mask.voxels[first:last + 1] > 0)))
            inter += len(va & vb)
            union += len(va | vb)
        pooled_at_step[step] = inter / union
    assert pooled_at_step[1] == 1.0
    assert pooled_at_step[1] > pooled_at_step[2] > pooled_at_step[4] > pooled_at_step[8]
    report("interpolation achieved IoU exact, 1.0 at step 1, strictly decreasing")


# --- hull oracle equivalence --------------------------------------------------------------


def brute_force_hull(points):
    best = {}
    for p in points:
        if p.effort not in best or p.perf_norm > best[p.effort].perf_norm:
            best[p.effort] = p
    pts = [best[e] for e in sorted(best)]
    kept = []
    for p in pts:
        covered = False
        for a in pts:
            for b in pts:
                if a.effort < p.effort < b.effort:
                    t = (p.effort - a.effort) / (b.effort - a.effort)
                    if a.perf_norm + t * (b.perf_norm - a.perf_norm) >= p.perf_norm:
                        covered = True
        if not covered:
            kept.append(p)
    return kept


def test_hull_equals_oracle_and_no_point_above():
    rng = random.Random(77)
    for trial in range(200):
        n = rng.randint(1, 50)
        pts = [
            PerfPoint(round(rng.random(), 6), round(rng.random(), 6), 1.0, 1.0, 100.0,
                      label=f"{trial}:{i}")
            for i in range(n)
        ]
        hull = upper_hull(pts)
        oracle = brute_force_hull(pts)
        assert [(v.effort, v.perf_norm) for v in hull] == [
            (v.effort, v.perf_norm) for v in oracle
        ]
        traj = optimal_trajectory(pts)
        lo, hi = traj.vertices[0].effort, traj.vertices[-1].effort
        for p in pts:
            if lo <= p.effort <= hi:
                assert p.perf_norm <= traj.segment_height(p.effort) + 1e-9
        perfs = [v.perf_norm for v in traj.vertices]
        assert perfs == sorted(perfs)
    report("upper hull equals O(n^3) oracle on 200 instances; no point above; "
           "trajectory non-decreasing")


# --- builtin gradient check ------------------------------------------------------------------


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(31)
    worst = 0.0
    for _ in range(3):
        img = rng.normal(0.5, 0.25, size=(16, 16)).astype(np.float32)
        X = _kernels.extract_features(img)
        y = (rng.random(X.shape[0]) > 0.65).astype(np.float64)
        w = rng.normal(0.0, 0.5, size=4)
        b = float(rng.normal())
        _, gw, gb = _kernels.logistic_loss_grad(X, y, w, b, 1.4, 0.7)
        h = 1e-6
        for j in range(5):
            if j < 4:
                wp, wm = w.copy(), w.copy()
                wp[j] += h
                wm[j] -= h
                lp, _, _ = _kernels.logistic_loss_grad(X, y, wp, b, 1.4, 0.7)
                lm, _, _ = _kernels.logistic_loss_grad(X, y, wm, b, 1.4, 0.7)
                analytic = gw[j]
            else:
                lp, _, _ = _kernels.logistic_loss_grad(X, y, w, b + h, 1.4, 0.7)
                lm, _, _ = _kernels.logistic_loss_grad(X, y, w, b - h, 1.4, 0.7)
                analytic = gb
            fd = (lp - lm) / (2 * h)
            rel = abs(analytic - fd) / max(abs(fd), 1e-8)
            worst = max(worst, rel)
            assert rel < 1e-4
    report(f"analytic gradient vs central differences, max rel err {worst:.2e} < 1e-4")


# --- end-to-end phantom grid -------------------------------------------------------------------

PHANTOM_SEED = 11
BASE_SEED = 1


@pytest.fixture(scope="session")
def phantom_grid(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_grid")
    generate_phantoms(20, (32, 32, 32), seed=PHANTOM_SEED, out_dir=root / "ds")
    spec = GridSpec(
        dataset_dir=str(root / "ds"),
        axis="quality-diversity",
        diversity=(0.25, 0.5, 1.0),
        completeness=(1.0,),
        quality=(75.0, 90.0, 100.0),
        repeats=5,
        base_seed=BASE_SEED,
        trainer="builtin",
    )
    result = run_grid(spec, root / "out", log=lambda m: None)
    return root, spec, result


def test_e2e_baseline_normalizes_to_one(phantom_grid):
    _, _, result = phantom_grid
    baseline = next(
        c for c in result.cells
        if (c.diversity, c.completeness, c.quality_target) == BASELINE_CELL
    )
    assert baseline.perf_norm == 1.0
    report("e2e: baseline cell perf_norm == 1.0 exactly")


def test_e2e_quality_monotone_at_full_diversity(phantom_grid):
    _, _, result = phantom_grid
    cells = {(c.diversity, c.quality_target): c for c in result.cells}
    seq = [cells[(1.0, q)].perf_norm for q in (75.0, 90.0, 100.0)]
    for a, b in zip(seq, seq[1:]):
        assert b >= a - 0.05, f"quality step dropped {a - b:.3f} > 0.05: {seq}"
    inversions = sum(1 for a, b in zip(seq, seq[1:]) if b < a)
    assert inversions <= 1, f"{inversions} inversions in {seq}"
    report(f"e2e: perf_norm over quality {{75,90,100}} at d=1 is "
           f"{[round(s, 4) for s in seq]} (tol 0.05, {inversions} inversion(s))")


def test_e2e_quality_matters_earlier_than_diversity(phantom_grid):
    _, _, result = phantom_grid
    points = [
        PerfPoint(
            effort=effort_qd(c.diversity, c.quality_achieved_pct),
            perf_norm=c.perf_norm,
            diversity=c.diversity,
            completeness=c.completeness,
            quality_pct=c.quality_achieved_pct,
            label=f"d={c.diversity:g},q={c.quality_target:g}",
        )
        for c in result.cells
        if c.valid
    ]
    curves = importance_curves(optimal_trajectory(points))
    q_at_90 = min((p for p, v in curves["quality"] if v >= 90.0), default=None)
    d_at_half = min((p for p, v in curves["diversity"] if v >= 0.5), default=float("inf"))
    assert q_at_90 is not None, "quality never reaches 90 on the trajectory"
    assert q_at_90 <= d_at_half
    report(f"e2e: quality reaches 90 at perf {q_at_90:.4f} <= diversity reaching "
           f"0.5 at {'inf' if d_at_half == float('inf') else f'{d_at_half:.4f}'}")


# --- saturation rule ---------------------------------------------------------------------------


def test_saturation_reference_and_rising():
    curve = [(0.2, 0.5), (0.4, 0.8), (0.6, 0.9), (0.8, 0.905), (1.0, 0.907)]
    assert detect_saturation(curve, epsilon=0.01, window=2) == 0.6
    rising = [(0.2, 0.2), (0.4, 0.5), (0.6, 0.7), (0.8, 0.9), (1.0, 1.0)]
    assert detect_saturation(rising, epsilon=0.01, window=2) is None
    report("saturation: hand-constructed curve -> 0.6, strictly rising -> none")


# --- determinism / idempotence ------------------------------------------------------------------


def test_e2e_rerun_is_byte_identical_with_full_cache(phantom_grid):
    root, spec, first = phantom_grid
    agg_bytes = first.aggregated_csv.read_bytes()
    runs_bytes = first.runs_csv.read_bytes()
    second = run_grid(spec, root / "out", log=lambda m: None)
    assert second.n_trained == 0, "rerun must be a full cache hit"
    assert second.n_cached == len(first.records)
    assert second.aggregated_csv.read_bytes() == agg_bytes
    assert second.runs_csv.read_bytes() == runs_bytes
    report("e2e rerun: zero training invocations, byte-identical CSVs")


# --- secondary: deep trainer plugin ----------------------------------------------------------------


def _plugin_available() -> bool:
    return importlib.util.find_spec("deepseg_trainer") is not None


@pytest.mark.skipif(not _plugin_available(),
                    reason="deep trainer plugin not installed; primary suite "
                           "runs without the secondary component")
def test_secondary_plugin_conformance_and_parity(phantom_grid, tmp_path):
    from labelbudget.datasets import Dataset
    from labelbudget.protocol import run_external

    root, _, _ = phantom_grid
    ds = Dataset.load(root / "ds")
    trainval, test = split_test(ds, 0.2, seed=0)
    train, val = split_train_val(trainval, seed=3)
    train = attach_training_slices(train, trainval.manifest.labeled_count())

    config = TrainConfig(seed=5, max_epochs=100, patience=10, learning_rate=3e-4)
    builtin = run_builtin(train, val, test, config)

    run_dir = tmp_path / "plugin"
    paths = {}
    for name, part in (("train", train), ("val", val), ("test", test)):
        part = rebase(part, run_dir)
        path = run_dir / f"{name}.json"
        path.write_bytes(manifest_to_bytes(part.manifest))
        paths[name] = path
    plugin = run_external(
        [sys.executable, "-m", "deepseg_trainer"],
        paths["train"], paths["val"], paths["test"], config, timeout_s=3600.0,
    )
    assert len(plugin.val_history) >= 1  # epoch events preceded done
    assert plugin.test_perf >= builtin.test_perf
    report(f"secondary: plugin conformant, test IoU {plugin.test_perf:.4f} >= "
           f"builtin {builtin.test_perf:.4f}")
