import numpy as np
import pytest

from labelbudget.datasets import Dataset, DatasetManifest, ManifestEntry
from labelbudget.volumes import LabelMask, VolumeGrid, write_mask, write_volume


def build_dataset(root, volumes, dataset_id="testset", split="trainval"):
    """Materialize {volume_id: (voxels f32 (nz,ny,nx), mask u8)} as a dataset
    directory with a saved manifest."""
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for vid in sorted(volumes):
        vox, msk = volumes[vid]
        grid = VolumeGrid(voxels=np.ascontiguousarray(vox, dtype=np.float32))
        mask = LabelMask(voxels=np.ascontiguousarray(msk, dtype=np.uint8))
        write_volume(root / f"{vid}.vol", grid)
        write_mask(root / f"{vid}_mask.vol", mask)
        entries.append(
            ManifestEntry(
                volume_id=vid,
                volume_path=f"{vid}.vol",
                mask_path=f"{vid}_mask.vol",
                split=split,
                labeled_slices=tuple(mask.labeled_slices()),
            )
        )
    ds = Dataset(root=root, manifest=DatasetManifest(dataset_id=dataset_id,
                                                     entries=tuple(entries)))
    ds.save()
    return ds


def separable_volume(shape=(6, 12, 12), fg_level=1.0, bg_level=0.0, z_range=None):
    """A volume whose foreground is a centered square at a distinct intensity:
    linearly separable on the raw intensity feature."""
    nz, ny, nx = shape
    vox = np.full(shape, bg_level, dtype=np.float32)
    msk = np.zeros(shape, dtype=np.uint8)
    zs = range(nz) if z_range is None else z_range
    for z in zs:
        vox[z, ny // 4: 3 * ny // 4, nx // 4: 3 * nx // 4] = fg_level
        msk[z, ny // 4: 3 * ny // 4, nx // 4: 3 * nx // 4] = 1
    return vox, msk


@pytest.fixture
def separable_dataset(tmp_path):
    volumes = {f"v{i}": separable_volume() for i in range(5)}
    return build_dataset(tmp_path / "sep", volumes)
