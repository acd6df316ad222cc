"""The built-in learner exposed as an external trainer.

Run as ``python -m labelbudget.builtin_trainer``. Reads one request line on
stdin, streams epoch events while training, and terminates with a done event.
Useful as the protocol reference implementation and for testing harness and
trainers against each other.
"""

from __future__ import annotations

import json
import sys

import numpy as np

from .datasets import load_manifest_file
from .errors import LabelBudgetError
from .training import TrainConfig, evaluate, train_builtin


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

    try:
        train_ds = load_manifest_file(req["train"])
        val_ds = load_manifest_file(req["val"])
        test_ds = load_manifest_file(req["test"])
        config = TrainConfig(
            seed=int(req["seed"]),
            max_epochs=int(req["max_epochs"]),
            patience=int(req["patience"]),
            learning_rate=float(req["lr"]),
        )

        def emit_epoch(epoch: int, val_iou: float) -> None:
            stdout.write(
                json.dumps({"event": "epoch", "epoch": epoch, "val_iou": val_iou})
                + "\n"
            )
            stdout.flush()

        slices = train_ds.manifest.training_slices
        if slices is None:
            slices = tuple(
                (e.volume_id, z)
                for e in train_ds.manifest.entries
                for z in e.labeled_slices
            )
        model, history = train_builtin(
            train_ds, slices, val_ds, config, on_epoch=emit_epoch
        )
        test_iou = evaluate(model, test_ds)
        best_epoch = int(np.argmax(history)) + 1
        stdout.write(
            json.dumps(
                {"event": "done", "test_iou": test_iou, "best_epoch": best_epoch}
            )
            + "\n"
        )
        stdout.flush()
        return 0
    except (LabelBudgetError, KeyError, ValueError, OSError) as exc:
        print(f"trainer failed: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(serve(sys.stdin, sys.stdout))


if __name__ == "__main__":
    main()
