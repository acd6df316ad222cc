"""Hot numeric kernels with backend selection at import.

The compiled Cython module is preferred; the numpy module is the fallback.
Set LABELBUDGET_BACKEND=numpy (or =native) to force one; forcing native
without a built extension raises at import.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _numpy


def _load_native() -> ModuleType | None:
    try:
        from . import _native  # type: ignore[attr-defined]

        return _native
    except ImportError:
        return None


def get_backend(name: str) -> ModuleType:
    if name == "numpy":
        return _numpy
    if name == "native":
        native = _load_native()
        if native is None:
            raise ImportError("native kernel extension is not built")
        return native
    raise ValueError(f"unknown kernel backend {name!r}")


_forced = os.environ.get("LABELBUDGET_BACKEND")
if _forced:
    _impl = get_backend(_forced)
    BACKEND = _forced
else:
    _native_mod = _load_native()
    if _native_mod is not None:
        _impl, BACKEND = _native_mod, "native"
    else:
        _impl, BACKEND = _numpy, "numpy"

extract_features = _impl.extract_features
logistic_loss_grad = _impl.logistic_loss_grad
predict_labels = _impl.predict_labels
overlap_counts = _impl.overlap_counts

__all__ = [
    "BACKEND",
    "extract_features",
    "get_backend",
    "logistic_loss_grad",
    "overlap_counts",
    "predict_labels",
]
