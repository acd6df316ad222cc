"""Pure numpy implementations of the hot kernels.

The compiled module (_native) mirrors these functions exactly; additions in
per-pixel expressions are written in the same order in both so results agree
to the last few ulps. Keep the two in sync.
"""

from __future__ import annotations

import numpy as np


def extract_features(img: np.ndarray) -> np.ndarray:
    """Per-voxel features of one 2D slice: intensity, 3x3 mean, 3x3 standard
    deviation, Sobel gradient magnitude. Borders are clamp-padded.

    img: (ny, nx) float32. Returns (ny*nx, 4) float64.
    """
    a = np.pad(img.astype(np.float64), 1, mode="edge")
    n00, n01, n02 = a[:-2, :-2], a[:-2, 1:-1], a[:-2, 2:]
    n10, n11, n12 = a[1:-1, :-2], a[1:-1, 1:-1], a[1:-1, 2:]
    n20, n21, n22 = a[2:, :-2], a[2:, 1:-1], a[2:, 2:]

    s = n00 + n01
    s = s + n02
    s = s + n10
    s = s + n11
    s = s + n12
    s = s + n20
    s = s + n21
    s = s + n22
    mean = s / 9.0

    q = n00 * n00 + n01 * n01
    q = q + n02 * n02
    q = q + n10 * n10
    q = q + n11 * n11
    q = q + n12 * n12
    q = q + n20 * n20
    q = q + n21 * n21
    q = q + n22 * n22
    var = q / 9.0 - mean * mean
    std = np.sqrt(np.maximum(var, 0.0))

    gx = (n02 + 2.0 * n12 + n22) - (n00 + 2.0 * n10 + n20)
    gy = (n20 + 2.0 * n21 + n22) - (n00 + 2.0 * n01 + n02)
    sobel = np.sqrt(gx * gx + gy * gy)

    n = img.shape[0] * img.shape[1]
    out = np.empty((n, 4), dtype=np.float64)
    out[:, 0] = n11.reshape(n)
    out[:, 1] = mean.reshape(n)
    out[:, 2] = std.reshape(n)
    out[:, 3] = sobel.reshape(n)
    return out


def logistic_loss_grad(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    b: float,
    w_pos: float,
    w_neg: float,
) -> tuple[float, np.ndarray, float]:
    """Class-weighted binary cross-entropy summed over the batch's voxels,
    and its analytic gradient.

    X: (n, k) float64; y: (n,) float64 in {0, 1}; w: (k,) float64.
    Voxel i carries weight w_pos if y_i = 1 else w_neg. The sum (not mean)
    makes every voxel one SGD sample, so a slice update advances the weights
    in proportion to the evidence it carries. Returns (loss, dL/dw, dL/db).
    """
    z = X @ w + b
    c = np.where(y == 1.0, w_pos, w_neg)
    # one exp per voxel: ez = exp(-|z|) feeds both the stable softplus
    # (softplus(t) = max(t,0) + log1p(exp(-|t|))) and the stable sigmoid
    ez = np.exp(-np.abs(z))
    lse = np.log1p(ez)
    t = np.where(y == 1.0, -z, z)
    loss = float(np.sum(c * (np.maximum(t, 0.0) + lse)))

    p = np.where(z >= 0.0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    d = c * (p - y)
    grad_w = X.T @ d
    grad_b = float(np.sum(d))
    return loss, grad_w, grad_b


def predict_labels(X: np.ndarray, w: np.ndarray, b: float) -> np.ndarray:
    """Hard labels: 1 where X@w + b >= 0. Returns (n,) uint8."""
    return (X @ w + b >= 0.0).astype(np.uint8)


def overlap_counts(a: np.ndarray, b: np.ndarray) -> tuple[int, int]:
    """(intersection, union) of two flat binary uint8 arrays."""
    a = a.reshape(-1)
    b = b.reshape(-1)
    inter = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a | b))
    return inter, union
