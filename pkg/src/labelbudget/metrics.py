"""Overlap metrics for binary masks."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import DomainError
from .volumes import LabelMask


def _as_array(mask) -> np.ndarray:
    if isinstance(mask, LabelMask):
        return mask.voxels
    return np.asarray(mask)


def iou(a, b) -> float:
    """Intersection over union of the foreground. Both empty counts as 1.0."""
    av, bv = _as_array(a), _as_array(b)
    if av.shape != bv.shape:
        raise DomainError(f"mask dims differ: {av.shape} vs {bv.shape}")
    inter, union = _kernels.overlap_counts(av, bv)
    if union == 0:
        return 1.0
    return inter / union


def dice(a, b) -> float:
    """Dice coefficient, 2|a∩b| / (|a|+|b|). Both empty counts as 1.0."""
    av, bv = _as_array(a), _as_array(b)
    if av.shape != bv.shape:
        raise DomainError(f"mask dims differ: {av.shape} vs {bv.shape}")
    inter, _ = _kernels.overlap_counts(av, bv)
    total = int(np.count_nonzero(av)) + int(np.count_nonzero(bv))
    if total == 0:
        return 1.0
    return 2.0 * inter / total


class PooledOverlap:
    """Accumulates intersection/union counts across many volumes so IoU is
    pooled over voxels rather than averaged per volume."""

    def __init__(self):
        self.intersection = 0
        self.union = 0

    def add(self, predicted, truth) -> None:
        pv, tv = _as_array(predicted), _as_array(truth)
        if pv.shape != tv.shape:
            raise DomainError(f"mask dims differ: {pv.shape} vs {tv.shape}")
        inter, union = _kernels.overlap_counts(pv, tv)
        self.intersection += inter
        self.union += union

    def add_counts(self, intersection: int, union: int) -> None:
        self.intersection += intersection
        self.union += union

    def iou(self) -> float:
        if self.union == 0:
            return 1.0
        return self.intersection / self.union
