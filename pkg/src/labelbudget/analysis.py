"""Effort/performance trajectory analysis.

Given experiment points in the (effort, normalized performance) plane, the
optimal labeling trajectory is the upper convex polyline through them: no
point lies above it, and following it yields the best achievable performance
at every effort level. Per-vertex labeling values against performance give
the importance curves; saturation detection finds where marginal gains die
out along a sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DomainError, GridError

ABOVE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class PerfPoint:
    effort: float
    perf_norm: float
    diversity: float
    completeness: float
    quality_pct: float
    label: str = ""  # identifies the producing grid cell


@dataclass(frozen=True)
class Trajectory:
    vertices: tuple[PerfPoint, ...]

    def segment_height(self, effort: float) -> float:
        """Polyline height at the given effort; endpoints extend flat edges
        are not included, callers must stay within [first, last] effort."""
        v = self.vertices
        if not v:
            raise DomainError("empty trajectory")
        if effort < v[0].effort or effort > v[-1].effort:
            raise DomainError(f"effort {effort} outside trajectory span")
        for a, b in zip(v, v[1:]):
            if a.effort <= effort <= b.effort:
                if b.effort == a.effort:
                    return max(a.perf_norm, b.perf_norm)
                t = (effort - a.effort) / (b.effort - a.effort)
                return a.perf_norm + t * (b.perf_norm - a.perf_norm)
        return v[-1].perf_norm


def normalize(perf_raw: float, baseline_perf: float) -> float:
    """Performance relative to the unaltered-data run. May exceed 1."""
    if baseline_perf <= 0.0:
        raise GridError("baseline performance is zero; the grid is invalid")
    return perf_raw / baseline_perf


def _collapse_effort_ties(points: Sequence[PerfPoint]) -> list[PerfPoint]:
    best: dict[float, PerfPoint] = {}
    for p in points:
        cur = best.get(p.effort)
        if cur is None or p.perf_norm > cur.perf_norm:
            best[p.effort] = p
    return [best[e] for e in sorted(best)]


def _cross(o: PerfPoint, a: PerfPoint, b: PerfPoint) -> float:
    return (a.effort - o.effort) * (b.perf_norm - o.perf_norm) - (
        a.perf_norm - o.perf_norm
    ) * (b.effort - o.effort)


def upper_hull(points: Iterable[PerfPoint]) -> list[PerfPoint]:
    """Upper convex hull by monotone chain, leftmost to rightmost.

    Effort ties collapse to the best-performing point first; collinear
    interior points are dropped. Slopes along the result are non-increasing.
    """
    pts = _collapse_effort_ties(list(points))
    if not pts:
        raise DomainError("upper_hull needs at least one point")
    hull: list[PerfPoint] = []
    for p in pts:
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) >= 0.0:
            hull.pop()
        hull.append(p)
    return hull


def optimal_trajectory(points: Iterable[PerfPoint]) -> Trajectory:
    """Upper hull truncated at its first maximum-performance vertex, so
    performance never decreases along the polyline."""
    hull = upper_hull(points)
    peak = max(v.perf_norm for v in hull)
    cut = next(i for i, v in enumerate(hull) if v.perf_norm == peak)
    vertices = tuple(hull[: cut + 1])
    for a, b in zip(vertices, vertices[1:]):
        if b.perf_norm < a.perf_norm:
            raise AssertionError("trajectory performance must be non-decreasing")
    return Trajectory(vertices=vertices)


def check_no_point_above(trajectory: Trajectory, points: Iterable[PerfPoint],
                         tolerance: float = ABOVE_TOLERANCE) -> None:
    """Raise if any point within the trajectory's effort span rises above it."""
    v = trajectory.vertices
    lo, hi = v[0].effort, v[-1].effort
    for p in points:
        if lo <= p.effort <= hi:
            height = trajectory.segment_height(p.effort)
            if p.perf_norm > height + tolerance:
                raise AssertionError(
                    f"point {p.label or p} at effort {p.effort} lies "
                    f"{p.perf_norm - height:.3g} above the trajectory"
                )


VIRTUE_FIELDS = {
    "diversity": "diversity",
    "completeness": "completeness",
    "quality": "quality_pct",
}


def importance_curves(trajectory: Trajectory) -> dict[str, list[tuple[float, float]]]:
    """Per labeling lever, (perf_norm, lever value) at every trajectory
    vertex, sorted by performance: what each lever must reach to achieve a
    given performance along the optimal path."""
    if not trajectory.vertices:
        raise DomainError("empty trajectory")
    curves: dict[str, list[tuple[float, float]]] = {}
    for name, attr in VIRTUE_FIELDS.items():
        series = [(v.perf_norm, getattr(v, attr)) for v in trajectory.vertices]
        series.sort(key=lambda t: t[0])
        curves[name] = series
    return curves


def detect_saturation(curve: Sequence[tuple[float, float]], epsilon: float = 0.01,
                      window: int = 2) -> float | None:
    """First sweep value past which performance stops growing.

    curve: (value, perf) pairs sorted by value. Returns the smallest value v
    such that each of the next `window` forward differences of perf is below
    epsilon * max(perf); None when the curve is still rising at the end.
    """
    if window < 1:
        raise DomainError(f"window must be >= 1, got {window}")
    if len(curve) < window + 1:
        raise DomainError(
            f"curve has {len(curve)} points, need at least {window + 1}"
        )
    values = [v for v, _ in curve]
    if any(b < a for a, b in zip(values, values[1:])):
        raise DomainError("curve must be sorted by sweep value")
    perfs = [p for _, p in curve]
    threshold = epsilon * max(perfs)
    for i in range(len(curve) - window):
        gains = [perfs[i + k + 1] - perfs[i + k] for k in range(window)]
        if all(g < threshold for g in gains):
            return values[i]
    return None
