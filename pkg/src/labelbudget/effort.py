"""Labeling-effort proxies.

Two scalar cost models, one per comparison axis: quality-vs-diversity prices
a labeled volume by the label quality spent on it; diversity-vs-completeness
prices by the total share of slices segmented. Both land in [0, 1] and are
reported as fractions; percent formatting belongs to the presentation layer.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DomainError


def effort_qd(diversity: float, quality_pct: float) -> float:
    """Effort as portion of volumes used times label quality.

    0.1 of the volumes at 80% label IoU costs 0.08.
    """
    if not (0.0 < diversity <= 1.0):
        raise DomainError(f"diversity must be in (0,1], got {diversity}")
    if not (0.0 <= quality_pct <= 100.0):
        raise DomainError(f"quality_pct must be in [0,100], got {quality_pct}")
    # multiply before dividing: keeps reference cases like 0.1 * 80 -> 8.0
    # exact in floating point
    return (diversity * quality_pct) / 100.0


def effort_dc(diversity: float, completeness: float) -> float:
    """Effort as the total fraction of slices segmented.

    0.6 of the volumes with every 10th slice labeled costs 0.06.
    """
    if not (0.0 < diversity <= 1.0):
        raise DomainError(f"diversity must be in (0,1], got {diversity}")
    if not (0.0 < completeness <= 1.0):
        raise DomainError(f"completeness must be in (0,1], got {completeness}")
    return diversity * completeness


@dataclass(frozen=True)
class EffortPoint:
    effort: float
    axis: str  # "quality-diversity" | "diversity-completeness"
    diversity: float
    completeness: float
    quality_pct: float
