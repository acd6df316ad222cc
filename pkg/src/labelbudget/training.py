"""Built-in slice-level trainer and evaluation.

The built-in learner is a per-voxel logistic classifier over four cheap slice
features (intensity, 3x3 mean, 3x3 standard deviation, Sobel magnitude),
trained by per-slice SGD with inverse-class-frequency loss weights and early
stopping on validation IoU. It is deliberately small: its job is to rank
clean datasets above degraded ones quickly and deterministically, not to
compete with a real segmentation network (plug one in over the wire protocol
for that).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .datasets import Dataset
from .errors import TrainingError
from .metrics import PooledOverlap
from .rng import hash_key, shuffled
from .volumes import VolumeGrid


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    max_epochs: int = 100
    patience: int = 10
    learning_rate: float = 3e-4
    trainer: str = "builtin"  # "builtin" or an external command line

    def __post_init__(self):
        if self.max_epochs < 1:
            raise TrainingError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 0:
            raise TrainingError(f"patience must be >= 0, got {self.patience}")


@dataclass(frozen=True)
class RunResult:
    test_perf: float
    best_epoch: int
    val_history: tuple[float, ...]


@dataclass
class BuiltinModel:
    """Logistic voxel classifier plus the frozen feature standardization."""

    weights: np.ndarray  # (4,)
    bias: float
    feat_mean: np.ndarray  # (4,)
    feat_std: np.ndarray  # (4,)

    def predict_slice(self, img: np.ndarray) -> np.ndarray:
        feats = _kernels.extract_features(np.ascontiguousarray(img, dtype=np.float32))
        feats = (feats - self.feat_mean) / self.feat_std
        labels = _kernels.predict_labels(feats, self.weights, self.bias)
        return labels.reshape(img.shape)

    def predict_volume(self, grid: VolumeGrid) -> np.ndarray:
        return np.stack([self.predict_slice(grid.voxels[z]) for z in range(grid.n_slices)])


def _class_weights(y: np.ndarray) -> tuple[float, float]:
    """Balanced weights n/(2*n_class); uniform when a class is absent."""
    n = y.shape[0]
    n_pos = int(np.count_nonzero(y))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        return 1.0, 1.0
    return n / (2.0 * n_pos), n / (2.0 * n_neg)


class _SliceBank:
    """Features and labels for the distinct slices referenced by a run."""

    def __init__(self, ds: Dataset, slices: Sequence[tuple[str, int]]):
        self.features: dict[tuple[str, int], np.ndarray] = {}
        self.labels: dict[tuple[str, int], np.ndarray] = {}
        self.weights: dict[tuple[str, int], tuple[float, float]] = {}
        needed: dict[str, set[int]] = {}
        for vid, z in slices:
            needed.setdefault(vid, set()).add(z)
        for vid in sorted(needed):
            grid, mask = ds.load_volume(vid)
            for z in sorted(needed[vid]):
                key = (vid, z)
                self.features[key] = _kernels.extract_features(grid.voxels[z])
                y = mask.voxels[z].reshape(-1).astype(np.float64)
                self.labels[key] = y
                self.weights[key] = _class_weights(y)


def train_builtin(
    train_ds: Dataset,
    train_slices: Sequence[tuple[str, int]],
    val_ds: Dataset,
    config: TrainConfig,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[BuiltinModel, list[float]]:
    """Fit the logistic learner on the given slice sequence.

    One epoch is one pass over train_slices in a seeded shuffled order.
    Stops once validation IoU fails to improve for `patience` consecutive
    epochs (patience 0 stops at the first non-improving epoch) and keeps the
    snapshot with the highest validation IoU.
    """
    if not train_slices:
        raise TrainingError("no training slices")
    val_slices = [
        (e.volume_id, z) for e in val_ds.manifest.entries for z in e.labeled_slices
    ]
    if not val_slices:
        raise TrainingError("no validation slices")

    bank = _SliceBank(train_ds, train_slices)
    val_bank = _SliceBank(val_ds, val_slices)

    # Standardization stats over the training sequence, multiplicity included.
    count = 0
    sum1 = np.zeros(4)
    sum2 = np.zeros(4)
    for key in train_slices:
        f = bank.features[key]
        count += f.shape[0]
        sum1 += f.sum(axis=0)
        sum2 += (f * f).sum(axis=0)
    mean = sum1 / count
    var = np.maximum(sum2 / count - mean * mean, 0.0)
    std = np.sqrt(var)
    std[std < 1e-8] = 1.0  # constant feature: leave centered values at zero

    std_feats = {k: (f - mean) / std for k, f in bank.features.items()}
    val_feats = {k: (f - mean) / std for k, f in val_bank.features.items()}

    w = np.zeros(4)
    b = 0.0
    lr = config.learning_rate
    stop_after = max(config.patience, 1)

    val_history: list[float] = []
    best_iou = -1.0
    best_epoch = 0
    best_w, best_b = w.copy(), b
    since_improved = 0

    keys = list(train_slices)
    for epoch in range(1, config.max_epochs + 1):
        order = shuffled(range(len(keys)), hash_key("epoch-order", config.seed, epoch))
        for idx in order:
            key = keys[idx]
            w_pos, w_neg = bank.weights[key]
            _, gw, gb = _kernels.logistic_loss_grad(
                std_feats[key], bank.labels[key], w, b, w_pos, w_neg
            )
            w = w - lr * gw
            b = b - lr * gb

        pooled = PooledOverlap()
        for key in val_slices:
            pred = _kernels.predict_labels(val_feats[key], w, b)
            truth = val_bank.labels[key].astype(np.uint8)
            pooled.add(pred, truth)
        val_iou = pooled.iou()
        val_history.append(val_iou)
        if on_epoch is not None:
            on_epoch(epoch, val_iou)

        if val_iou > best_iou:
            best_iou = val_iou
            best_epoch = epoch
            best_w, best_b = w.copy(), b
            since_improved = 0
        else:
            since_improved += 1
            if since_improved >= stop_after:
                break

    model = BuiltinModel(weights=best_w, bias=best_b, feat_mean=mean, feat_std=std)
    return model, val_history


def evaluate(model, test_ds: Dataset) -> float:
    """Pooled foreground IoU over every slice of every test volume, labeled
    or not; ground truth is the stored mask."""
    if not test_ds.manifest.entries:
        raise TrainingError("empty test set")
    pooled = PooledOverlap()
    for e in test_ds.manifest.entries:
        grid, mask = test_ds.load_volume(e.volume_id)
        pred = model.predict_volume(grid)
        pooled.add(pred, mask.voxels)
    return pooled.iou()


def run_builtin(
    train_ds: Dataset,
    val_ds: Dataset,
    test_ds: Dataset,
    config: TrainConfig,
    on_epoch: Callable[[int, float], None] | None = None,
) -> RunResult:
    """Train the built-in learner and measure it on the test set."""
    slices = train_ds.manifest.training_slices
    if slices is None:
        slices = tuple(
            (e.volume_id, z) for e in train_ds.manifest.entries for z in e.labeled_slices
        )
    model, history = train_builtin(train_ds, slices, val_ds, config, on_epoch=on_epoch)
    test_perf = evaluate(model, test_ds)
    best_epoch = int(np.argmax(history)) + 1
    return RunResult(
        test_perf=test_perf, best_epoch=best_epoch, val_history=tuple(history)
    )
