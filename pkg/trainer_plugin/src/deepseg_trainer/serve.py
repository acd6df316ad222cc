"""Wire-protocol trainer service.

Reads one JSON request line on stdin
({"cmd":"train","train":...,"val":...,"test":...,"seed":N,"max_epochs":N,
"patience":N,"lr":X}), trains the ResNet-18 UNet on the train manifest's
slice sequence, emits one epoch event per epoch with pooled validation IoU,
and finishes with a done event carrying the best snapshot's pooled test IoU.
Exit 0 on success; diagnostics go to stderr and any failure exits nonzero.
"""

from __future__ import annotations

import copy
import json
import random
import sys

import numpy as np
import torch
import torch.nn.functional as F

from .formats import Manifest, read_manifest, read_vol
from .model import ResNetUNet, forward_slices

INFERENCE_CHUNK = 16
BATCH_SIZE = 16  # larger batches keep the BatchNorm statistics steady


class VolumeCache:
    def __init__(self):
        self._arrays: dict[str, np.ndarray] = {}

    def get(self, path) -> np.ndarray:
        key = str(path)
        if key not in self._arrays:
            self._arrays[key] = read_vol(path)
        return self._arrays[key]


def train_sequence(manifest: Manifest) -> list[tuple[str, int]]:
    if manifest.training_slices is not None:
        return list(manifest.training_slices)
    return [(e.volume_id, z) for e in manifest.entries for z in e.labeled_slices]


def pooled_iou(model, manifest: Manifest, cache: VolumeCache, mean: float,
               std: float, labeled_only: bool) -> float:
    model.eval()
    inter = union = 0
    with torch.no_grad():
        for e in manifest.entries:
            vol = cache.get(e.volume_path).astype(np.float32)
            mask = cache.get(e.mask_path)
            zs = list(e.labeled_slices) if labeled_only else list(range(vol.shape[0]))
            for start in range(0, len(zs), INFERENCE_CHUNK):
                chunk = zs[start:start + INFERENCE_CHUNK]
                batch = torch.from_numpy((vol[chunk] - mean) / std)
                logits = forward_slices(model, batch)
                pred = (logits >= 0).numpy().astype(np.uint8)
                truth = mask[chunk]
                inter += int(np.logical_and(pred, truth).sum())
                union += int(np.logical_or(pred, truth).sum())
    return 1.0 if union == 0 else inter / union


def run_training(req: dict, emit_epoch) -> tuple[float, int]:
    seed = int(req["seed"])
    max_epochs = int(req["max_epochs"])
    patience = int(req["patience"])
    lr = float(req["lr"])

    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)

    train_m = read_manifest(req["train"])
    val_m = read_manifest(req["val"])
    test_m = read_manifest(req["test"])
    cache = VolumeCache()

    sequence = train_sequence(train_m)
    if not sequence:
        raise ValueError("train manifest has no slices to train on")

    # intensity standardization from the distinct training slices
    uniq = sorted(set(sequence))
    stats = np.concatenate([
        cache.get(train_m.entry(vid).volume_path)[z].reshape(-1) for vid, z in uniq
    ]).astype(np.float64)
    mean = float(stats.mean())
    std = float(stats.std())
    if std < 1e-8:
        std = 1.0

    slices_x: dict[tuple[str, int], np.ndarray] = {}
    slices_y: dict[tuple[str, int], np.ndarray] = {}
    for vid, z in uniq:
        e = train_m.entry(vid)
        slices_x[(vid, z)] = (
            (cache.get(e.volume_path)[z].astype(np.float32) - mean) / std
        )
        slices_y[(vid, z)] = cache.get(e.mask_path)[z].astype(np.float32)

    model = ResNetUNet()
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    criterion = torch.nn.BCEWithLogitsLoss()

    stop_after = max(patience, 1)
    best_iou = -1.0
    best_epoch = 0
    best_state = copy.deepcopy(model.state_dict())
    since_improved = 0

    for epoch in range(1, max_epochs + 1):
        model.train()
        order = list(range(len(sequence)))
        random.Random((seed, epoch).__repr__()).shuffle(order)
        # batch indices whose slices share a shape
        by_shape: dict[tuple[int, int], list[int]] = {}
        for idx in order:
            by_shape.setdefault(slices_x[sequence[idx]].shape, []).append(idx)
        for group in by_shape.values():
            for start in range(0, len(group), BATCH_SIZE):
                keys = [sequence[i] for i in group[start:start + BATCH_SIZE]]
                x = torch.from_numpy(np.stack([slices_x[k] for k in keys]))
                y = torch.from_numpy(np.stack([slices_y[k] for k in keys]))
                optimizer.zero_grad()
                logits = forward_slices(model, x)
                loss = criterion(logits, y)
                loss.backward()
                optimizer.step()

        val_iou = pooled_iou(model, val_m, cache, mean, std, labeled_only=True)
        emit_epoch(epoch, val_iou)
        if val_iou > best_iou:
            best_iou = val_iou
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
            since_improved = 0
        else:
            since_improved += 1
            if since_improved >= stop_after:
                break

    model.load_state_dict(best_state)
    test_iou = pooled_iou(model, test_m, cache, mean, std, labeled_only=False)
    return test_iou, best_epoch


def serve(stdin, stdout) -> int:
    line = stdin.readline()
    if not line:
        print("no request line on stdin", file=sys.stderr)
        return 1
    try:
        req = json.loads(line)
    except json.JSONDecodeError as exc:
        print(f"bad request: {exc}", file=sys.stderr)
        return 1
    if req.get("cmd") != "train":
        print(f"unsupported cmd {req.get('cmd')!r}", file=sys.stderr)
        return 1

    def emit_epoch(epoch: int, val_iou: float) -> None:
        stdout.write(json.dumps({"event": "epoch", "epoch": epoch,
                                 "val_iou": val_iou}) + "\n")
        stdout.flush()

    try:
        test_iou, best_epoch = run_training(req, emit_epoch)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"trainer failed: {exc}", file=sys.stderr)
        return 1
    stdout.write(json.dumps({"event": "done", "test_iou": test_iou,
                             "best_epoch": best_epoch}) + "\n")
    stdout.flush()
    return 0


def main() -> None:
    sys.exit(serve(sys.stdin, sys.stdout))


if __name__ == "__main__":
    main()
