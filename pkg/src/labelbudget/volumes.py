"""3D intensity volumes, binary masks, and the .vol container format.

Container layout: one UTF-8 header line

    LBVOL1 nx ny nz sx sy sz dtype\n

with dtype in {f32, u8}, followed by the raw little-endian voxel payload in
x-fastest order (x varies fastest, then y, then z). In memory voxels are
numpy arrays of shape (nz, ny, nx), C order, which matches the payload
byte-for-byte.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import VolumeFormatError

MAGIC = "LBVOL1"

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}
_DTYPE_NAMES = {np.dtype("<f4"): "f32", np.dtype("u1"): "u8"}


def _check_dims(dims: tuple[int, int, int]) -> None:
    if len(dims) != 3 or any(int(d) < 1 for d in dims):
        raise VolumeFormatError(f"dims must be three positive integers, got {dims!r}")


@dataclass(frozen=True)
class VolumeGrid:
    """Scalar intensity grid. voxels: float32 array of shape (nz, ny, nx)."""

    voxels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.voxels.ndim != 3:
            raise VolumeFormatError("voxels must be a 3D array")
        if self.voxels.dtype != np.float32:
            raise VolumeFormatError("volume voxels must be float32")

    @property
    def dims(self) -> tuple[int, int, int]:
        """(nx, ny, nz). Note the reversal against the array shape."""
        nz, ny, nx = self.voxels.shape
        return (nx, ny, nz)

    @property
    def n_slices(self) -> int:
        return self.voxels.shape[0]

    def slice_at(self, z: int) -> np.ndarray:
        return self.voxels[z]


@dataclass(frozen=True)
class LabelMask:
    """Binary mask aligned to a VolumeGrid. voxels: uint8 in {0, 1},
    shape (nz, ny, nx)."""

    voxels: np.ndarray

    def __post_init__(self):
        if self.voxels.ndim != 3:
            raise VolumeFormatError("voxels must be a 3D array")
        if self.voxels.dtype != np.uint8:
            raise VolumeFormatError("mask voxels must be uint8")

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.voxels.shape
        return (nx, ny, nz)

    @property
    def n_slices(self) -> int:
        return self.voxels.shape[0]

    def labeled_slices(self) -> list[int]:
        """z indices whose slice contains at least one foreground voxel."""
        flags = self.voxels.any(axis=(1, 2))
        return [int(z) for z in np.nonzero(flags)[0]]

    def validate_binary(self) -> None:
        if not np.isin(self.voxels, (0, 1)).all():
            bad = sorted(set(np.unique(self.voxels)) - {0, 1})
            raise VolumeFormatError(f"mask contains values outside {{0,1}}: {bad}")


def _format_spacing(s: float) -> str:
    return repr(float(s))


def write_vol(path: str | Path, array: np.ndarray,
              spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> None:
    """Write a (nz, ny, nx) float32 or uint8 array as a .vol file."""
    arr = np.ascontiguousarray(array)
    if arr.ndim != 3:
        raise VolumeFormatError("only 3D arrays can be written")
    if arr.dtype == np.float32:
        arr = arr.astype("<f4", copy=False)
        dtype_name = "f32"
    elif arr.dtype == np.uint8:
        dtype_name = "u8"
    else:
        raise VolumeFormatError(f"unsupported dtype {arr.dtype}")
    nz, ny, nx = arr.shape
    header = " ".join(
        [MAGIC, str(nx), str(ny), str(nz)]
        + [_format_spacing(s) for s in spacing]
        + [dtype_name]
    ) + "\n"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(arr.tobytes())


def read_vol(path: str | Path) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Read a .vol file. Returns (array of shape (nz, ny, nx), spacing)."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = bytearray()
        while True:
            ch = fh.read(1)
            if not ch:
                raise VolumeFormatError(f"{path}: truncated header")
            if ch == b"\n":
                break
            header.extend(ch)
            if len(header) > 256:
                raise VolumeFormatError(f"{path}: header line too long")
        payload = fh.read()

    fields = header.decode("utf-8").split(" ")
    if len(fields) != 8 or fields[0] != MAGIC:
        raise VolumeFormatError(f"{path}: bad header {header.decode('utf-8', 'replace')!r}")
    try:
        nx, ny, nz = (int(f) for f in fields[1:4])
        spacing = tuple(float(f) for f in fields[4:7])
    except ValueError as exc:
        raise VolumeFormatError(f"{path}: unparsable header field: {exc}") from exc
    if fields[7] not in _DTYPES:
        raise VolumeFormatError(f"{path}: unknown dtype {fields[7]!r}")
    dtype = _DTYPES[fields[7]]
    _check_dims((nx, ny, nz))

    expected = nx * ny * nz * dtype.itemsize
    if len(payload) != expected:
        raise VolumeFormatError(
            f"{path}: voxel payload is {len(payload)} bytes, expected {expected}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(nz, ny, nx)
    if dtype == np.dtype("<f4"):
        arr = arr.astype(np.float32, copy=False)
    return arr.copy(), spacing  # copy: frombuffer views are read-only


def write_volume(path: str | Path, grid: VolumeGrid) -> None:
    write_vol(path, grid.voxels, grid.spacing)


def write_mask(path: str | Path, mask: LabelMask,
               spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> None:
    write_vol(path, mask.voxels, spacing)


def read_volume(path: str | Path) -> VolumeGrid:
    arr, spacing = read_vol(path)
    if arr.dtype != np.float32:
        raise VolumeFormatError(f"{path}: expected f32 volume, found {arr.dtype}")
    return VolumeGrid(voxels=arr, spacing=spacing)


def read_mask(path: str | Path) -> LabelMask:
    arr, _ = read_vol(path)
    if arr.dtype != np.uint8:
        raise VolumeFormatError(f"{path}: expected u8 mask, found {arr.dtype}")
    mask = LabelMask(voxels=arr)
    mask.validate_binary()
    return mask


def read_pgm_slice(path: str | Path) -> np.ndarray:
    """Read one grayscale slice image as a (ny, nx) array.

    8-bit images only; masks rely on the >127 binarization rule which is
    defined for 8-bit exports.
    """
    from PIL import Image

    with Image.open(path) as img:
        if img.mode != "L":
            raise VolumeFormatError(
                f"{os.fspath(path)}: expected 8-bit grayscale, found mode {img.mode!r}"
            )
        return np.asarray(img, dtype=np.uint8)
