"""Readers for the host toolkit's on-disk formats.

Implemented from the documented external interfaces only: the `.vol`
container (one `LBVOL1 nx ny nz sx sy sz dtype` header line, then raw
little-endian voxels, x fastest) and the dataset manifest JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


def read_vol(path: str | Path) -> np.ndarray:
    """Returns the voxel array with shape (nz, ny, nx)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("utf-8").strip()
        payload = fh.read()
    fields = header.split(" ")
    if len(fields) != 8 or fields[0] != "LBVOL1":
        raise ValueError(f"{path}: not an LBVOL1 file")
    nx, ny, nz = (int(v) for v in fields[1:4])
    dtype = _DTYPES.get(fields[7])
    if dtype is None:
        raise ValueError(f"{path}: unknown dtype {fields[7]!r}")
    expected = nx * ny * nz * dtype.itemsize
    if len(payload) != expected:
        raise ValueError(f"{path}: payload {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(nz, ny, nx).copy()


@dataclass(frozen=True)
class Entry:
    volume_id: str
    volume_path: Path
    mask_path: Path
    labeled_slices: tuple[int, ...]


@dataclass(frozen=True)
class Manifest:
    entries: tuple[Entry, ...]
    training_slices: tuple[tuple[str, int], ...] | None

    def entry(self, volume_id: str) -> Entry:
        for e in self.entries:
            if e.volume_id == volume_id:
                return e
        raise KeyError(volume_id)


def read_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    doc = json.loads(path.read_text("utf-8"))
    root = path.parent
    entries = tuple(
        Entry(
            volume_id=e["volume_id"],
            volume_path=(root / e["volume_path"]).resolve(),
            mask_path=(root / e["mask_path"]).resolve(),
            labeled_slices=tuple(int(z) for z in e["labeled_slices"]),
        )
        for e in doc["entries"]
    )
    training = doc.get("training_slices")
    training_slices = (
        tuple((str(v), int(z)) for v, z in training) if training is not None else None
    )
    return Manifest(entries=entries, training_slices=training_slices)
