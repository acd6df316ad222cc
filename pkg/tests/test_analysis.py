import random

import pytest

from labelbudget.analysis import (
    PerfPoint,
    check_no_point_above,
    detect_saturation,
    importance_curves,
    normalize,
    optimal_trajectory,
    upper_hull,
)
from labelbudget.errors import DomainError, GridError


def P(effort, perf, d=1.0, c=1.0, q=100.0, label=""):
    return PerfPoint(effort=effort, perf_norm=perf, diversity=d, completeness=c,
                     quality_pct=q, label=label or f"({effort},{perf})")


# --- brute-force O(n^3) hull oracle ------------------------------------------------


def oracle_upper_hull(points):
    """A point survives unless some pair strictly embracing it covers it at
    or above its height (>= drops collinear interior points too). Effort
    ties collapse to the best performer first."""
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
                    height = a.perf_norm + t * (b.perf_norm - a.perf_norm)
                    if height >= p.perf_norm:
                        covered = True
        if not covered:
            kept.append(p)
    return kept


def as_pairs(vertices):
    return [(v.effort, v.perf_norm) for v in vertices]


# --- normalize ------------------------------------------------------------------------


def test_normalize_identity():
    assert normalize(0.9, 0.9) == 1.0


def test_normalize_arithmetic():
    assert normalize(0.45, 0.9) == pytest.approx(0.5, abs=1e-15)


def test_normalize_may_exceed_one():
    assert normalize(0.95, 0.9) > 1.0  # accepted, not clamped


def test_normalize_zero_baseline_rejected():
    with pytest.raises(GridError):
        normalize(0.5, 0.0)


# --- upper hull ------------------------------------------------------------------------


def test_collinear_interior_points_dropped():
    pts = [P(0, 0), P(1, 1), P(2, 2)]
    assert as_pairs(upper_hull(pts)) == [(0, 0), (2, 2)]


def test_concave_three_points_all_kept():
    pts = [P(0, 0), P(1, 0.9), P(2, 1.0)]
    assert as_pairs(upper_hull(pts)) == [(0, 0), (1, 0.9), (2, 1.0)]
    assert as_pairs(oracle_upper_hull(pts)) == [(0, 0), (1, 0.9), (2, 1.0)]


def test_low_middle_point_excluded():
    pts = [P(0, 0), P(1, 0.2), P(2, 1.0)]
    assert as_pairs(upper_hull(pts)) == [(0, 0), (2, 1.0)]
    assert as_pairs(oracle_upper_hull(pts)) == [(0, 0), (2, 1.0)]


def test_effort_ties_collapse_to_best():
    pts = [P(0, 0.1), P(0, 0.4), P(1, 0.5)]
    assert as_pairs(upper_hull(pts)) == [(0, 0.4), (1, 0.5)]


def test_single_point_hull():
    assert as_pairs(upper_hull([P(0.3, 0.7)])) == [(0.3, 0.7)]


def test_empty_input_rejected():
    with pytest.raises(DomainError):
        upper_hull([])


def test_hull_matches_oracle_on_random_instances():
    rng = random.Random(2024)
    for trial in range(200):
        n = rng.randint(1, 50)
        pts = [
            P(round(rng.random(), 6), round(rng.random(), 6), label=f"t{trial}p{i}")
            for i in range(n)
        ]
        got = as_pairs(upper_hull(pts))
        want = as_pairs(oracle_upper_hull(pts))
        assert got == want, f"trial {trial}: {got} != {want}"


def test_hull_slopes_non_increasing():
    rng = random.Random(7)
    pts = [P(rng.random(), rng.random()) for _ in range(200)]
    hull = upper_hull(pts)
    slopes = [
        (b.perf_norm - a.perf_norm) / (b.effort - a.effort)
        for a, b in zip(hull, hull[1:])
    ]
    assert all(s2 <= s1 + 1e-12 for s1, s2 in zip(slopes, slopes[1:]))


# --- optimal trajectory -------------------------------------------------------------------


def test_trajectory_equals_hull_when_increasing():
    pts = [P(0, 0), P(1, 0.9), P(2, 1.0)]
    traj = optimal_trajectory(pts)
    assert as_pairs(traj.vertices) == [(0, 0), (1, 0.9), (2, 1.0)]


def test_descending_tail_truncated():
    pts = [P(0, 0), P(1, 1.0), P(2, 0.5)]
    traj = optimal_trajectory(pts)
    assert as_pairs(traj.vertices) == [(0, 0), (1, 1.0)]


def test_no_point_above_trajectory_on_random_clouds():
    rng = random.Random(99)
    for trial in range(25):
        pts = [P(rng.random(), rng.random()) for _ in range(50)]
        traj = optimal_trajectory(pts)
        check_no_point_above(traj, pts)
        perfs = [v.perf_norm for v in traj.vertices]
        assert perfs == sorted(perfs)


def test_scale_covariance():
    rng = random.Random(5)
    pts = [P(rng.random(), rng.random(), label=f"p{i}") for i in range(40)]
    base = [v.label for v in optimal_trajectory(pts).vertices]
    for scale in (0.5, 3.0, 1000.0):
        scaled = [
            PerfPoint(p.effort * scale, p.perf_norm, p.diversity, p.completeness,
                      p.quality_pct, p.label)
            for p in pts
        ]
        assert [v.label for v in optimal_trajectory(scaled).vertices] == base


# --- importance curves ----------------------------------------------------------------------


def test_single_vertex_importance():
    traj = optimal_trajectory([P(1, 1, d=0.5, c=0.8, q=90)])
    curves = importance_curves(traj)
    assert curves["diversity"] == [(1, 0.5)]
    assert curves["completeness"] == [(1, 0.8)]
    assert curves["quality"] == [(1, 90)]


def test_quality_rises_before_diversity_shape():
    # vertices: quality climbs to >= 90 while diversity still sits at 0.2
    traj = optimal_trajectory(
        [
            P(0.16, 0.6, d=0.2, q=80),
            P(0.18, 0.8, d=0.2, q=90),
            P(0.19, 0.9, d=0.2, q=95),
            P(0.6, 1.0, d=0.6, q=100),
        ]
    )
    curves = importance_curves(traj)
    q_at_90 = min(p for p, v in curves["quality"] if v >= 90)
    d_at_half = min(p for p, v in curves["diversity"] if v >= 0.5)
    assert q_at_90 <= d_at_half


def test_curve_lengths_match_vertex_count():
    pts = [P(i / 10, i / 10, d=0.1 * i, q=50 + 5 * i) for i in range(1, 8)]
    traj = optimal_trajectory(pts)
    curves = importance_curves(traj)
    for series in curves.values():
        assert len(series) == len(traj.vertices)


# --- saturation detection --------------------------------------------------------------------


def test_saturation_reference_curve():
    curve = [(0.2, 0.5), (0.4, 0.8), (0.6, 0.9), (0.8, 0.905), (1.0, 0.907)]
    assert detect_saturation(curve, epsilon=0.01, window=2) == 0.6


def test_steeply_rising_curve_never_saturates():
    curve = [(0.2, 0.2), (0.4, 0.4), (0.6, 0.6), (0.8, 0.8), (1.0, 1.0)]
    assert detect_saturation(curve, epsilon=0.01, window=2) is None


def test_flat_curve_saturates_immediately():
    curve = [(0.2, 0.8), (0.4, 0.8), (0.6, 0.8)]
    assert detect_saturation(curve, epsilon=0.01, window=2) == 0.2


def test_short_curve_rejected():
    with pytest.raises(DomainError, match="points"):
        detect_saturation([(0.2, 0.5), (0.4, 0.8)], window=2)


def test_unsorted_curve_rejected():
    with pytest.raises(DomainError, match="sorted"):
        detect_saturation([(0.4, 0.5), (0.2, 0.8), (0.6, 0.9)], window=1)
