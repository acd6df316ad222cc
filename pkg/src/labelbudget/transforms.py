"""Dataset transforms that degrade diversity, completeness, and label quality
under a recorded, replayable provenance.

Diversity and completeness are modeled by deterministic subsampling (volumes
and labeled slices respectively); quality by re-labeling from a sparse set of
equidistant slices with nearest-neighbor copies, measured as the IoU between
the re-labeled and the original masks. Every transform appends a provenance
record {op, params, seed} sufficient to replay it bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .datasets import (
    Dataset,
    DatasetManifest,
    ManifestEntry,
    TransformRecord,
    relative_posix,
)
from .errors import DomainError, ManifestError, TrainingError
from .metrics import PooledOverlap, iou
from .rng import hash_key, shuffled
from .volumes import LabelMask, write_mask

DEFAULT_TEST_FRACTION = 0.2
VAL_FRACTION = 0.2
UPSAMPLE_NUMERATOR = 4  # training slice count = 4/5 of the original labeled count


@dataclass(frozen=True)
class LabelingConfig:
    """One point in (diversity, completeness, quality) space.

    Exactly one of quality_target (percent of IoU to retain) and slice_step
    (explicit labeling stride) is set.
    """

    diversity: float
    completeness: float
    quality_target: float | None
    slice_step: int | None
    seed: int

    def __post_init__(self):
        if not (0.0 < self.diversity <= 1.0):
            raise DomainError(f"diversity must be in (0,1], got {self.diversity}")
        if not (0.0 < self.completeness <= 1.0):
            raise DomainError(f"completeness must be in (0,1], got {self.completeness}")
        if (self.quality_target is None) == (self.slice_step is None):
            raise DomainError("set exactly one of quality_target and slice_step")
        if self.quality_target is not None and not (0.0 <= self.quality_target <= 100.0):
            raise DomainError(f"quality_target must be in [0,100], got {self.quality_target}")
        if self.slice_step is not None and self.slice_step < 1:
            raise DomainError(f"slice_step must be >= 1, got {self.slice_step}")


@dataclass(frozen=True)
class QualityReport:
    slice_step: int
    achieved_iou: float  # pooled over the transformed volumes, in [0, 1]

    @property
    def achieved_pct(self) -> float:
        return 100.0 * self.achieved_iou


def fraction_count(fraction: float, n: int) -> int:
    """Ceiling selection count, clamped to [1, n].

    The 1e-9 nudge keeps an exactly-integral fraction*n from ticking up one
    slot when the float product lands a few ulps high.
    """
    if n < 1:
        raise DomainError("cannot select from an empty collection")
    k = math.ceil(fraction * n - 1e-9)
    return max(1, min(n, k))


# --- volume-level splits and sampling ---------------------------------------


def _select_ids(manifest: DatasetManifest, seed: int, count: int,
                key_id: str) -> set[str]:
    order = shuffled(manifest.volume_ids(), hash_key(key_id, seed))
    return set(order[:count])


def split_test(ds: Dataset, fraction: float = DEFAULT_TEST_FRACTION,
               seed: int = 0) -> tuple[Dataset, Dataset]:
    """Carve out the held-out test volumes once per dataset.

    ceil(fraction*N) volumes go to test, chosen by the deterministic shuffle
    keyed by (dataset_id, seed). Both sides keep at least one volume.
    """
    m = ds.manifest
    if len(m.entries) < 2:
        raise ManifestError("test split needs at least 2 volumes")
    if not (0.0 < fraction < 1.0):
        raise DomainError(f"test fraction must be in (0,1), got {fraction}")
    if any(e.split != "trainval" for e in m.entries):
        raise ManifestError("test split expects all entries in split=trainval")

    n_test = min(fraction_count(fraction, len(m.entries)), len(m.entries) - 1)
    test_ids = _select_ids(m, seed, n_test, m.dataset_id)

    def record(keep: str) -> TransformRecord:
        return TransformRecord(
            op="split_test", params={"fraction": fraction, "keep": keep}, seed=seed
        )

    trainval = m.with_entries(
        (e for e in m.entries if e.volume_id not in test_ids), record("trainval")
    )
    test = m.with_entries(
        (replace(e, split="test") for e in m.entries if e.volume_id in test_ids),
        record("test"),
    )
    return Dataset(ds.root, trainval), Dataset(ds.root, test)


def sample_diversity(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep the first ceil(fraction*N) volumes of the deterministic shuffle,
    preserving manifest order among the survivors."""
    m = ds.manifest
    if not m.entries:
        raise ManifestError("cannot sample volumes from an empty manifest")
    if not (0.0 < fraction <= 1.0):
        raise DomainError(f"diversity fraction must be in (0,1], got {fraction}")
    keep = _select_ids(m, seed, fraction_count(fraction, len(m.entries)), m.dataset_id)
    record = TransformRecord(
        op="sample_diversity", params={"fraction": fraction}, seed=seed
    )
    out = m.with_entries((e for e in m.entries if e.volume_id in keep), record)
    return Dataset(ds.root, out)


def sample_completeness(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep ceil(fraction*L) of each volume's L labeled slices, chosen by the
    deterministic shuffle keyed by (volume_id, seed)."""
    m = ds.manifest
    if not (0.0 < fraction <= 1.0):
        raise DomainError(f"completeness fraction must be in (0,1], got {fraction}")
    entries = []
    for e in m.entries:
        if not e.labeled_slices:
            raise ManifestError(f"volume {e.volume_id} has no labeled slices")
        order = shuffled(list(e.labeled_slices), hash_key(e.volume_id, seed))
        kept = sorted(order[: fraction_count(fraction, len(e.labeled_slices))])
        entries.append(replace(e, labeled_slices=tuple(kept)))
    record = TransformRecord(
        op="sample_completeness", params={"fraction": fraction}, seed=seed
    )
    return Dataset(ds.root, m.with_entries(entries, record))


def split_train_val(ds: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Volume-level 80/20 train/val split via the deterministic shuffle.

    A fresh seed per repetition gives fresh splits; slice-level splitting of
    a single volume is not supported.
    """
    m = ds.manifest
    if len(m.entries) < 2:
        raise TrainingError(
            "train/val split needs at least 2 volumes; "
            "slice-level splitting of a single volume is not supported"
        )
    n_val = min(fraction_count(VAL_FRACTION, len(m.entries)), len(m.entries) - 1)
    val_ids = _select_ids(m, seed, n_val, m.dataset_id)

    def record(keep: str) -> TransformRecord:
        return TransformRecord(
            op="split_train_val", params={"fraction": VAL_FRACTION, "keep": keep}, seed=seed
        )

    train = m.with_entries(
        (replace(e, split="train") for e in m.entries if e.volume_id not in val_ids),
        record("train"),
    )
    val = m.with_entries(
        (replace(e, split="val") for e in m.entries if e.volume_id in val_ids),
        record("val"),
    )
    return Dataset(ds.root, train), Dataset(ds.root, val)


# --- label quality degradation ----------------------------------------------


def kept_slices(labeled_z: tuple[int, ...] | list[int], slice_step: int) -> list[int]:
    """The equidistant slices that keep their original labels: first labeled,
    first+step, ... plus always the last labeled slice."""
    if not labeled_z:
        raise DomainError("labeled_z must be nonempty")
    if slice_step < 1:
        raise DomainError(f"slice_step must be >= 1, got {slice_step}")
    first, last = labeled_z[0], labeled_z[-1]
    kept = list(range(first, last + 1, slice_step))
    if kept[-1] != last:
        kept.append(last)
    return kept


def degrade_quality(mask: LabelMask, labeled_z, slice_step: int
                    ) -> tuple[LabelMask, QualityReport]:
    """Re-label one volume from a sparse set of equidistant slices.

    Slices between kept slices receive a nearest-neighbor copy (ties go to
    the lower z); slices outside [first, last] labeled are untouched. The
    report's achieved_iou compares output to input over that labeled range.
    """
    labeled_z = sorted(int(z) for z in labeled_z)
    kept = kept_slices(labeled_z, slice_step)
    first, last = labeled_z[0], labeled_z[-1]
    if last >= mask.n_slices:
        raise DomainError(f"labeled slice {last} outside mask with {mask.n_slices} slices")

    out = mask.voxels.copy()
    kept_arr = np.asarray(kept)
    for z in range(first, last + 1):
        if z in kept:
            continue
        dist = np.abs(kept_arr - z)
        src = int(kept_arr[int(np.argmin(dist))])  # argmin takes the lower z on ties
        out[z] = mask.voxels[src]

    degraded = LabelMask(voxels=out)
    achieved = iou(out[first:last + 1], mask.voxels[first:last + 1])
    return degraded, QualityReport(slice_step=slice_step, achieved_iou=achieved)


def _pooled_quality(ds: Dataset, slice_step: int,
                    masks: dict[str, LabelMask]) -> float:
    pooled = PooledOverlap()
    for e in ds.manifest.entries:
        mask = masks[e.volume_id]
        first, last = e.labeled_slices[0], e.labeled_slices[-1]
        degraded, _ = degrade_quality(mask, e.labeled_slices, slice_step)
        pooled.add(degraded.voxels[first:last + 1], mask.voxels[first:last + 1])
    return pooled.iou()


def step_for_target_quality(ds: Dataset, quality_target: float
                            ) -> tuple[int, QualityReport]:
    """Largest labeling stride whose pooled re-label IoU stays at or above
    quality_target percent, found by scanning strides upward from 1."""
    if not (0.0 <= quality_target <= 100.0):
        raise DomainError(f"quality_target must be in [0,100], got {quality_target}")
    m = ds.manifest
    if not m.entries:
        raise ManifestError("empty manifest")
    for e in m.entries:
        if not e.labeled_slices:
            raise ManifestError(f"volume {e.volume_id} has no labeled slices")

    masks = {e.volume_id: ds.load_mask(e.volume_id) for e in m.entries}
    max_range = max(e.labeled_slices[-1] - e.labeled_slices[0] for e in m.entries)
    cap = max(1, max_range)  # beyond this every volume keeps endpoints only
    threshold = quality_target / 100.0

    best_step, best_iou = 1, 1.0  # step 1 copies every slice exactly
    for step in range(2, cap + 1):
        achieved = _pooled_quality(ds, step, masks)
        if achieved < threshold:
            break
        best_step, best_iou = step, achieved
    return best_step, QualityReport(slice_step=best_step, achieved_iou=best_iou)


def apply_quality(ds: Dataset, slice_step: int, out_dir: str | Path
                  ) -> tuple[Dataset, QualityReport]:
    """Degrade every volume's mask at the given stride, materializing new mask
    files under out_dir. Stride 1 is the identity and touches no files."""
    m = ds.manifest
    record = TransformRecord(
        op="degrade_quality", params={"slice_step": int(slice_step)}, seed=None
    )
    if slice_step == 1:
        return Dataset(ds.root, m.with_entries(m.entries, record)), QualityReport(1, 1.0)

    out_dir = Path(out_dir)
    mask_dir = out_dir / "masks"
    mask_dir.mkdir(parents=True, exist_ok=True)
    pooled = PooledOverlap()
    entries = []
    for e in m.entries:
        mask = ds.load_mask(e.volume_id)
        if not e.labeled_slices:
            raise ManifestError(f"volume {e.volume_id} has no labeled slices")
        degraded, _ = degrade_quality(mask, e.labeled_slices, slice_step)
        first, last = e.labeled_slices[0], e.labeled_slices[-1]
        pooled.add(degraded.voxels[first:last + 1], mask.voxels[first:last + 1])
        mask_file = mask_dir / f"{e.volume_id}_mask.vol"
        write_mask(mask_file, degraded)
        entries.append(
            replace(
                e,
                volume_path=relative_posix(ds.volume_path(e), out_dir),
                mask_path=relative_posix(mask_file, out_dir),
            )
        )
    out_manifest = m.with_entries(entries, record)
    return Dataset(out_dir, out_manifest), QualityReport(slice_step, pooled.iou())


# --- training-set upsampling -------------------------------------------------


def upsample_target(original_labeled_count: int) -> int:
    """round(0.8 * original_labeled_count), computed exactly in integers."""
    return (UPSAMPLE_NUMERATOR * original_labeled_count + 2) // 5


def upsample_train(manifest: DatasetManifest, original_labeled_count: int
                   ) -> list[tuple[str, int]]:
    """Cyclic repetition of the train slices, in manifest order, out to 80%
    of the original trainval labeled-slice count."""
    base = [(e.volume_id, z) for e in manifest.entries for z in e.labeled_slices]
    if not base:
        raise TrainingError("train manifest has no labeled slices")
    target = upsample_target(original_labeled_count)
    if target < 1:
        raise TrainingError("original labeled count too small to form a training set")
    return [base[i % len(base)] for i in range(target)]


def attach_training_slices(ds: Dataset, original_labeled_count: int) -> Dataset:
    """Record the upsampled slice sequence on the manifest so external
    trainers can consume it without re-deriving the upsampling."""
    slices = upsample_train(ds.manifest, original_labeled_count)
    record = TransformRecord(
        op="upsample_train",
        params={"original_labeled_count": int(original_labeled_count)},
        seed=None,
    )
    m = ds.manifest.with_entries(ds.manifest.entries, record)
    m = replace(m, training_slices=tuple(slices))
    return Dataset(ds.root, m)


def rebase(ds: Dataset, new_root: str | Path) -> Dataset:
    """Re-anchor the manifest's relative paths to a different directory,
    without touching the referenced files."""
    new_root = Path(new_root)
    new_root.mkdir(parents=True, exist_ok=True)
    rel = relative_posix(new_root.resolve(), ds.root.resolve())
    entries = [
        replace(
            e,
            volume_path=relative_posix(ds.volume_path(e), new_root),
            mask_path=relative_posix(ds.mask_path(e), new_root),
        )
        for e in ds.manifest.entries
    ]
    record = TransformRecord(op="rebase", params={"path": rel}, seed=None)
    return Dataset(new_root, ds.manifest.with_entries(entries, record))


# --- provenance replay --------------------------------------------------------


def replay_provenance(origin: Dataset, provenance, work_dir: str | Path) -> Dataset:
    """Re-apply recorded transforms to the original dataset.

    With the same directory layout this reproduces the transformed manifest
    byte-for-byte; quality materialization is re-run under work_dir.
    """
    ds = origin
    for rec in provenance:
        op, params, seed = rec.op, rec.params, rec.seed
        if op == "split_test":
            trainval, test = split_test(ds, params["fraction"], seed)
            ds = {"trainval": trainval, "test": test}[params["keep"]]
        elif op == "sample_diversity":
            ds = sample_diversity(ds, params["fraction"], seed)
        elif op == "sample_completeness":
            ds = sample_completeness(ds, params["fraction"], seed)
        elif op == "degrade_quality":
            ds, _ = apply_quality(ds, params["slice_step"], work_dir)
        elif op == "split_train_val":
            train, val = split_train_val(ds, seed)
            ds = {"train": train, "val": val}[params["keep"]]
        elif op == "upsample_train":
            ds = attach_training_slices(ds, params["original_labeled_count"])
        elif op == "rebase":
            from pathlib import PurePosixPath

            ds = rebase(ds, ds.root / PurePosixPath(params["path"]))
        else:
            raise ManifestError(f"unknown provenance op {op!r}")
    return ds
