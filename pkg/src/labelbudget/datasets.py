"""Dataset manifests: cataloging volume/mask pairs, slice-stack ingestion,
and synthetic phantom generation.

A dataset on disk is a directory holding .vol files plus one manifest.json.
Manifest serialization is byte-stable (sorted keys, fixed indentation) so
that equality of manifests can be checked as equality of bytes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path, PurePosixPath
from typing import Iterable

import numpy as np

from .errors import DomainError, ManifestError, VolumeFormatError
from .rng import derive_seed
from .volumes import (
    LabelMask,
    VolumeGrid,
    read_mask,
    read_pgm_slice,
    read_volume,
    write_mask,
    write_volume,
)

SPLITS = ("trainval", "test", "train", "val")

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ManifestEntry:
    volume_id: str
    volume_path: str  # posix path relative to the manifest directory
    mask_path: str
    split: str
    labeled_slices: tuple[int, ...]

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ManifestError(f"{self.volume_id}: invalid split {self.split!r}")
        if list(self.labeled_slices) != sorted(set(self.labeled_slices)):
            raise ManifestError(f"{self.volume_id}: labeled_slices must be sorted and unique")
        if self.labeled_slices and self.labeled_slices[0] < 0:
            raise ManifestError(f"{self.volume_id}: negative slice index")


@dataclass(frozen=True)
class TransformRecord:
    op: str
    params: dict
    seed: int | None = None

    def to_doc(self) -> dict:
        return {"op": self.op, "params": self.params, "seed": self.seed}


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    entries: tuple[ManifestEntry, ...]
    provenance: tuple[TransformRecord, ...] = ()
    training_slices: tuple[tuple[str, int], ...] | None = None

    def __post_init__(self):
        ids = [e.volume_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ManifestError("duplicate volume_id in manifest")

    def entry(self, volume_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.volume_id == volume_id:
                return e
        raise ManifestError(f"volume {volume_id!r} not in manifest")

    def volume_ids(self) -> list[str]:
        return [e.volume_id for e in self.entries]

    def with_entries(self, entries: Iterable[ManifestEntry],
                     record: TransformRecord | None = None) -> "DatasetManifest":
        prov = self.provenance + ((record,) if record else ())
        return replace(self, entries=tuple(entries), provenance=prov)

    def labeled_count(self) -> int:
        return sum(len(e.labeled_slices) for e in self.entries)


def manifest_to_bytes(manifest: DatasetManifest) -> bytes:
    doc = {
        "dataset_id": manifest.dataset_id,
        "entries": [
            {
                "volume_id": e.volume_id,
                "volume_path": e.volume_path,
                "mask_path": e.mask_path,
                "split": e.split,
                "labeled_slices": list(e.labeled_slices),
            }
            for e in manifest.entries
        ],
        "provenance": [r.to_doc() for r in manifest.provenance],
    }
    if manifest.training_slices is not None:
        doc["training_slices"] = [[vid, z] for vid, z in manifest.training_slices]
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8")


def manifest_from_bytes(data: bytes) -> DatasetManifest:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestError(f"unreadable manifest: {exc}") from exc
    try:
        entries = tuple(
            ManifestEntry(
                volume_id=e["volume_id"],
                volume_path=e["volume_path"],
                mask_path=e["mask_path"],
                split=e["split"],
                labeled_slices=tuple(int(z) for z in e["labeled_slices"]),
            )
            for e in doc["entries"]
        )
        provenance = tuple(
            TransformRecord(op=r["op"], params=r["params"], seed=r["seed"])
            for r in doc.get("provenance", [])
        )
        training = doc.get("training_slices")
        training_slices = (
            tuple((str(v), int(z)) for v, z in training) if training is not None else None
        )
        return DatasetManifest(
            dataset_id=doc["dataset_id"],
            entries=entries,
            provenance=provenance,
            training_slices=training_slices,
        )
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"manifest missing field: {exc}") from exc


@dataclass(frozen=True)
class Dataset:
    """A manifest bound to the directory its relative paths resolve against."""

    root: Path
    manifest: DatasetManifest

    @classmethod
    def load(cls, root: str | Path) -> "Dataset":
        root = Path(root)
        manifest_path = root / MANIFEST_NAME
        if not manifest_path.is_file():
            raise ManifestError(f"no {MANIFEST_NAME} in {root}")
        return cls(root=root, manifest=manifest_from_bytes(manifest_path.read_bytes()))

    def save(self) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / MANIFEST_NAME
        path.write_bytes(manifest_to_bytes(self.manifest))
        return path

    def volume_path(self, entry: ManifestEntry) -> Path:
        return (self.root / PurePosixPath(entry.volume_path)).resolve()

    def mask_path(self, entry: ManifestEntry) -> Path:
        return (self.root / PurePosixPath(entry.mask_path)).resolve()

    def load_volume(self, volume_id: str) -> tuple[VolumeGrid, LabelMask]:
        entry = self.manifest.entry(volume_id)
        grid = read_volume(self.volume_path(entry))
        mask = read_mask(self.mask_path(entry))
        if grid.dims != mask.dims:
            raise VolumeFormatError(
                f"{volume_id}: volume dims {grid.dims} != mask dims {mask.dims}"
            )
        nz = grid.dims[2]
        if entry.labeled_slices and entry.labeled_slices[-1] >= nz:
            raise ManifestError(
                f"{volume_id}: labeled slice {entry.labeled_slices[-1]} outside [0, {nz})"
            )
        return grid, mask

    def load_mask(self, volume_id: str) -> LabelMask:
        return read_mask(self.mask_path(self.manifest.entry(volume_id)))


def load_volume(dataset: Dataset, volume_id: str) -> tuple[VolumeGrid, LabelMask]:
    return dataset.load_volume(volume_id)


def load_manifest_file(path: str | Path) -> Dataset:
    """Load a manifest stored under a name other than manifest.json; relative
    paths resolve against the file's directory."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest file {path} does not exist")
    return Dataset(root=path.parent, manifest=manifest_from_bytes(path.read_bytes()))


def relative_posix(target: Path, base: Path) -> str:
    import os.path

    return PurePosixPath(os.path.relpath(target, base)).as_posix()


# --- slice-stack ingestion -------------------------------------------------

_IMG_RE = re.compile(r"^img_(\d{4})\.pgm$")
_MSK_RE = re.compile(r"^msk_(\d{4})\.pgm$")


def _collect_slice_files(vol_dir: Path) -> list[tuple[int, Path, Path]]:
    imgs: dict[int, Path] = {}
    msks: dict[int, Path] = {}
    for f in sorted(vol_dir.iterdir()):
        m = _IMG_RE.match(f.name)
        if m:
            imgs[int(m.group(1))] = f
            continue
        m = _MSK_RE.match(f.name)
        if m:
            msks[int(m.group(1))] = f
    if not imgs:
        raise VolumeFormatError(f"{vol_dir}: no img_<z>.pgm slices found")
    if set(imgs) != set(msks):
        missing = sorted(set(imgs) ^ set(msks))
        raise VolumeFormatError(f"{vol_dir}: unpaired slice indices {missing}")
    indices = sorted(imgs)
    if indices != list(range(len(indices))):
        raise VolumeFormatError(f"{vol_dir}: slice indices not consecutive from 0: {indices}")
    return [(z, imgs[z], msks[z]) for z in indices]


def ingest_slice_stack(source_dir: str | Path, dataset_id: str,
                       out_dir: str | Path) -> Dataset:
    """Ingest per-volume directories of img_<z>.pgm / msk_<z>.pgm pairs.

    Intensities are stored as value/255 float32. Masks binarize at >127.
    Every slice whose binarized mask is nonempty is recorded as labeled;
    all entries start in split=trainval.
    """
    source_dir = Path(source_dir)
    out_dir = Path(out_dir)
    if not source_dir.is_dir():
        raise ManifestError(f"source directory {source_dir} does not exist")
    vol_dirs = sorted(d for d in source_dir.iterdir() if d.is_dir())
    if not vol_dirs:
        raise ManifestError(f"{source_dir}: no volume subdirectories")

    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for vol_dir in vol_dirs:
        vid = vol_dir.name
        slices = _collect_slice_files(vol_dir)
        img_planes, msk_planes = [], []
        shape = None
        for z, img_path, msk_path in slices:
            img = read_pgm_slice(img_path)
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise VolumeFormatError(
                    f"{img_path}: slice is {img.shape[1]}x{img.shape[0]}, "
                    f"volume is {shape[1]}x{shape[0]}"
                )
            msk = read_pgm_slice(msk_path)
            if msk.shape != shape:
                raise VolumeFormatError(
                    f"{msk_path}: mask is {msk.shape[1]}x{msk.shape[0]}, "
                    f"volume is {shape[1]}x{shape[0]}"
                )
            img_planes.append(img.astype(np.float32) / np.float32(255.0))
            msk_planes.append((msk > 127).astype(np.uint8))

        grid = VolumeGrid(voxels=np.stack(img_planes, axis=0))
        mask = LabelMask(voxels=np.stack(msk_planes, axis=0))
        vol_file = out_dir / f"{vid}.vol"
        msk_file = out_dir / f"{vid}_mask.vol"
        write_volume(vol_file, grid)
        write_mask(msk_file, mask)
        entries.append(
            ManifestEntry(
                volume_id=vid,
                volume_path=vol_file.name,
                mask_path=msk_file.name,
                split="trainval",
                labeled_slices=tuple(mask.labeled_slices()),
            )
        )

    manifest = DatasetManifest(dataset_id=dataset_id, entries=tuple(entries))
    ds = Dataset(root=out_dir, manifest=manifest)
    ds.save()
    return ds


# --- synthetic phantoms ----------------------------------------------------

MIN_PHANTOM_DIM = 8
RADIUS_RANGE = (0.15, 0.35)  # fraction of min(dims)


def _phantom_volume(dims: tuple[int, int, int], seed: int,
                    index: int) -> tuple[VolumeGrid, LabelMask]:
    """One ellipsoid phantom. Draw order is fixed: radii, center, foreground
    field, background field, additive noise; changing it changes bytes."""
    nx, ny, nz = dims
    rng = np.random.default_rng(derive_seed("phantom", seed, index))
    min_dim = min(dims)
    radii = rng.uniform(RADIUS_RANGE[0] * min_dim, RADIUS_RANGE[1] * min_dim, size=3)
    center = np.array([
        rng.uniform(radii[0], nx - 1 - radii[0]),
        rng.uniform(radii[1], ny - 1 - radii[1]),
        rng.uniform(radii[2], nz - 1 - radii[2]),
    ])

    zz, yy, xx = np.meshgrid(
        np.arange(nz, dtype=np.float64),
        np.arange(ny, dtype=np.float64),
        np.arange(nx, dtype=np.float64),
        indexing="ij",
    )
    q = (
        ((xx - center[0]) / radii[0]) ** 2
        + ((yy - center[1]) / radii[1]) ** 2
        + ((zz - center[2]) / radii[2]) ** 2
    )
    inside = q <= 1.0

    fg = rng.normal(0.8, 0.1, size=(nz, ny, nx))
    bg = rng.normal(0.2, 0.1, size=(nz, ny, nx))
    noise = rng.normal(0.0, 0.05, size=(nz, ny, nx))
    voxels = (np.where(inside, fg, bg) + noise).astype(np.float32)
    mask = inside.astype(np.uint8)
    return VolumeGrid(voxels=voxels), LabelMask(voxels=mask)


def generate_phantoms(n_volumes: int, dims: tuple[int, int, int], seed: int,
                      out_dir: str | Path, dataset_id: str = "phantoms") -> Dataset:
    """Generate n ellipsoid phantom volumes with exact membership masks."""
    if n_volumes < 1:
        raise DomainError("n_volumes must be >= 1")
    if len(dims) != 3 or any(d < MIN_PHANTOM_DIM for d in dims):
        raise DomainError(
            f"dims must each be >= {MIN_PHANTOM_DIM} to fit the minimum radius, got {dims}"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for i in range(n_volumes):
        vid = f"vol{i:04d}"
        grid, mask = _phantom_volume(tuple(int(d) for d in dims), seed, i)
        vol_file = out_dir / f"{vid}.vol"
        msk_file = out_dir / f"{vid}_mask.vol"
        write_volume(vol_file, grid)
        write_mask(msk_file, mask)
        entries.append(
            ManifestEntry(
                volume_id=vid,
                volume_path=vol_file.name,
                mask_path=msk_file.name,
                split="trainval",
                labeled_slices=tuple(mask.labeled_slices()),
            )
        )

    manifest = DatasetManifest(dataset_id=dataset_id, entries=tuple(entries))
    ds = Dataset(root=out_dir, manifest=manifest)
    ds.save()
    return ds
