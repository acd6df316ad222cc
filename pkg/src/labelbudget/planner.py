"""Next-action recommendation from the latest aggregated results.

The rule cascade mirrors the labeling procedure the experiments support:
bring label quality to the threshold first (slices without interpolation,
at least 90%), then add diverse volumes until the diversity sweep saturates,
then spend the remaining budget on completeness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .analysis import detect_saturation
from .errors import GridError
from .runner import AggregatedRow

QUALITY_THRESHOLD_PCT = 90.0

ACTIONS = ("raise_quality", "add_diverse_volumes", "increase_completeness")

LEVER_VALUE = {
    "diversity": lambda r: r.diversity,
    "completeness": lambda r: r.completeness,
    "quality": lambda r: r.quality_achieved_pct,
}


@dataclass(frozen=True)
class Recommendation:
    action: str
    rationale: str
    quality_pct: float
    quality_threshold: float
    saturation_value: float | None

    def to_doc(self) -> dict:
        return {
            "action": self.action,
            "rationale": self.rationale,
            "quality_pct": self.quality_pct,
            "quality_threshold": self.quality_threshold,
            "saturation_value": self.saturation_value,
        }


def sweep_curves(rows: Sequence[AggregatedRow], lever: str
                 ) -> dict[str, list[tuple[float, float]]]:
    """Performance curves along one lever, grouped by the fixed values of the
    other two. Quality groups bucket the achieved percent to the nearest
    integer since it varies slightly across seeds."""
    if lever not in LEVER_VALUE:
        raise GridError(f"unknown lever {lever!r}")
    value_of = LEVER_VALUE[lever]
    groups: dict[str, dict[float, float]] = {}
    for r in rows:
        if not r.valid or value_of(r) is None:
            continue
        parts = []
        if lever != "diversity":
            parts.append(f"d={r.diversity:g}")
        if lever != "completeness":
            parts.append(f"c={r.completeness:g}")
        if lever != "quality":
            parts.append(f"q={round(r.quality_achieved_pct)}"
                         if r.quality_achieved_pct is not None else "q=?")
        key = ",".join(parts)
        bucket = groups.setdefault(key, {})
        v = float(value_of(r))
        if v not in bucket or r.perf_norm > bucket[v]:
            bucket[v] = r.perf_norm
    return {
        key: sorted(bucket.items())
        for key, bucket in sorted(groups.items())
        if len(bucket) >= 2
    }


def current_quality(rows: Sequence[AggregatedRow]) -> float:
    """Achieved label quality at the best operating point seen so far: the
    valid cell with the highest normalized performance (cheapest on ties)."""
    candidates = [r for r in rows if r.valid and r.quality_achieved_pct is not None]
    if not candidates:
        raise GridError("no valid cells with a measured label quality")
    best = max(candidates, key=lambda r: (r.perf_norm, -r.effort_dc))
    return best.quality_achieved_pct


def recommend_next(
    quality_pct: float,
    diversity_curves: dict[str, list[tuple[float, float]]],
    quality_threshold: float = QUALITY_THRESHOLD_PCT,
    epsilon: float = 0.01,
    window: int = 2,
) -> Recommendation:
    """Rule cascade: raise quality below the threshold; otherwise add diverse
    volumes until every diversity sweep saturates; then completeness."""
    if quality_pct < quality_threshold:
        return Recommendation(
            action="raise_quality",
            rationale=(
                f"achieved label quality {quality_pct:.1f}% is below the "
                f"{quality_threshold:g}% threshold: segment slices without "
                f"interpolation until quality reaches the threshold"
            ),
            quality_pct=quality_pct,
            quality_threshold=quality_threshold,
            saturation_value=None,
        )

    evaluable = {
        key: curve for key, curve in diversity_curves.items() if len(curve) >= window + 1
    }
    if not evaluable:
        raise GridError(
            "no diversity sweep with enough points: run a diversity sweep "
            "(axis=diversity-sweep) and train a model as early as possible"
        )

    saturations = {
        key: detect_saturation(curve, epsilon=epsilon, window=window)
        for key, curve in evaluable.items()
    }
    still_rising = [key for key, sat in saturations.items() if sat is None]
    if still_rising:
        return Recommendation(
            action="add_diverse_volumes",
            rationale=(
                f"label quality {quality_pct:.1f}% meets the threshold but the "
                f"diversity sweep is still rising ({', '.join(still_rising)}): "
                f"distribute new labels over additional volumes"
            ),
            quality_pct=quality_pct,
            quality_threshold=quality_threshold,
            saturation_value=None,
        )

    latest = max(v for v in saturations.values() if v is not None)
    return Recommendation(
        action="increase_completeness",
        rationale=(
            f"label quality {quality_pct:.1f}% meets the threshold and every "
            f"diversity sweep saturates by diversity={latest:g}: squeeze the "
            f"remaining gains by labeling or interpolating more slices per volume"
        ),
        quality_pct=quality_pct,
        quality_threshold=quality_threshold,
        saturation_value=latest,
    )
