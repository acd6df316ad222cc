"""Supervision of external trainers over the newline-delimited JSON protocol.

Harness -> trainer, one request line on stdin:

    {"cmd":"train","train":P,"val":P,"test":P,"seed":N,
     "max_epochs":N,"patience":N,"lr":X}

Trainer -> harness on stdout: zero or more
{"event":"epoch","epoch":N,"val_iou":X} followed by exactly one
{"event":"done","test_iou":X,"best_epoch":N}, then exit 0. The harness kills
the process on malformed lines, metric bounds violations, epoch budgets the
trainer ignored, or timeout.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from pathlib import Path

from .errors import ProtocolError
from .training import RunResult, TrainConfig

DEFAULT_TIMEOUT_S = 3600.0

_SENTINEL = object()


def build_request(train_path: str | Path, val_path: str | Path,
                  test_path: str | Path, config: TrainConfig) -> str:
    return json.dumps(
        {
            "cmd": "train",
            "train": str(train_path),
            "val": str(val_path),
            "test": str(test_path),
            "seed": config.seed,
            "max_epochs": config.max_epochs,
            "patience": config.patience,
            "lr": config.learning_rate,
        },
        sort_keys=True,
    )


def _pump(stream, out_queue: queue.Queue) -> None:
    try:
        for line in stream:
            out_queue.put(line)
    finally:
        out_queue.put(_SENTINEL)


class _EpochTracker:
    """Mirrors the early-stopping contract to catch trainers that ignore it."""

    def __init__(self, max_epochs: int, patience: int):
        self.max_epochs = max_epochs
        self.stop_after = max(patience, 1)
        self.count = 0
        self.best = -1.0
        self.since_improved = 0

    def observe(self, epoch: int, val_iou: float) -> None:
        if self.count >= self.max_epochs:
            raise ProtocolError(
                f"trainer exceeded max_epochs={self.max_epochs} with epoch {epoch}"
            )
        if self.since_improved >= self.stop_after:
            raise ProtocolError(
                f"trainer ignored patience={self.stop_after}: epoch {epoch} arrived "
                f"after {self.since_improved} non-improving epochs"
            )
        self.count += 1
        if val_iou > self.best:
            self.best = val_iou
            self.since_improved = 0
        else:
            self.since_improved += 1


def _parse_event(raw: str, line_no: int) -> dict:
    try:
        event = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"line {line_no}: not valid JSON: {raw.strip()!r}") from exc
    if not isinstance(event, dict) or "event" not in event:
        raise ProtocolError(f"line {line_no}: missing 'event' field: {raw.strip()!r}")
    return event


def _check_unit(value, name: str, line_no: int) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ProtocolError(f"line {line_no}: {name} must be a number")
    if not (0.0 <= float(value) <= 1.0):
        raise ProtocolError(f"line {line_no}: {name}={value} outside [0,1]")
    return float(value)


def run_external(
    command: str | list[str],
    train_path: str | Path,
    val_path: str | Path,
    test_path: str | Path,
    config: TrainConfig,
    timeout_s: float = DEFAULT_TIMEOUT_S,
) -> RunResult:
    """Launch a trainer process, stream its epoch events, and return the
    final test metric. Raises ProtocolError on any contract violation."""
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    proc = subprocess.Popen(
        argv,
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    lines: queue.Queue = queue.Queue()
    stderr_chunks: list[str] = []
    threading.Thread(target=_pump, args=(proc.stdout, lines), daemon=True).start()
    threading.Thread(
        target=lambda: stderr_chunks.extend(proc.stderr), daemon=True
    ).start()

    import time

    deadline = time.monotonic() + timeout_s

    def fail(exc: Exception) -> Exception:
        proc.kill()
        proc.wait()
        tail = "".join(stderr_chunks[-20:]).strip()
        if tail:
            return ProtocolError(f"{exc} (trainer stderr: {tail[-500:]})")
        return exc if isinstance(exc, ProtocolError) else ProtocolError(str(exc))

    try:
        proc.stdin.write(build_request(train_path, val_path, test_path, config) + "\n")
        proc.stdin.flush()
        proc.stdin.close()
    except BrokenPipeError:
        pass  # diagnosed below via missing done / exit code

    tracker = _EpochTracker(config.max_epochs, config.patience)
    val_history: list[float] = []
    done: dict | None = None
    line_no = 0

    while done is None:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise fail(ProtocolError(f"trainer timed out after {timeout_s:.0f}s"))
        try:
            item = lines.get(timeout=min(remaining, 0.5))
        except queue.Empty:
            continue
        if item is _SENTINEL:
            code = proc.wait()
            raise fail(
                ProtocolError(f"trainer exited (code {code}) before a 'done' event")
            )
        line_no += 1
        if not item.strip():
            raise fail(ProtocolError(f"line {line_no}: blank line"))
        try:
            event = _parse_event(item, line_no)
            kind = event["event"]
            if kind == "epoch":
                if "epoch" not in event or "val_iou" not in event:
                    raise ProtocolError(f"line {line_no}: epoch event missing fields")
                val = _check_unit(event["val_iou"], "val_iou", line_no)
                tracker.observe(int(event["epoch"]), val)
                val_history.append(val)
            elif kind == "done":
                if "test_iou" not in event or "best_epoch" not in event:
                    raise ProtocolError(f"line {line_no}: done event missing fields")
                _check_unit(event["test_iou"], "test_iou", line_no)
                done = event
            else:
                raise ProtocolError(f"line {line_no}: unknown event {kind!r}")
        except ProtocolError as exc:
            raise fail(exc)

    try:
        code = proc.wait(timeout=max(deadline - time.monotonic(), 1.0))
    except subprocess.TimeoutExpired:
        raise fail(ProtocolError("trainer did not exit after its 'done' event"))
    if code != 0:
        raise fail(ProtocolError(f"trainer exited with code {code}"))

    best_epoch = int(done["best_epoch"])
    if val_history and not (1 <= best_epoch <= len(val_history)):
        raise ProtocolError(
            f"best_epoch={best_epoch} outside the {len(val_history)} reported epochs"
        )
    return RunResult(
        test_perf=float(done["test_iou"]),
        best_epoch=best_epoch,
        val_history=tuple(val_history),
    )
