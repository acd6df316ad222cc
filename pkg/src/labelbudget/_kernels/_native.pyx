# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels.

Semantics mirror _numpy.py exactly; per-pixel arithmetic is written in the
same order so the two backends agree to the last few ulps. Keep in sync.
"""

import numpy as np

cimport cython
from libc.math cimport exp, fabs, log1p, sqrt


def extract_features(img):
    """Per-voxel features of one 2D slice: intensity, 3x3 mean, 3x3 standard
    deviation, Sobel gradient magnitude. Borders are clamp-padded.

    img: (ny, nx) float32. Returns (ny*nx, 4) float64.
    """
    cdef const float[:, ::1] a = np.ascontiguousarray(img, dtype=np.float32)
    cdef Py_ssize_t ny = a.shape[0]
    cdef Py_ssize_t nx = a.shape[1]
    out = np.empty((ny * nx, 4), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t y, x, ym, yp, xm, xp, i
    cdef double n00, n01, n02, n10, n11, n12, n20, n21, n22
    cdef double s, q, mean, var, gx, gy

    with nogil:
        for y in range(ny):
            ym = y - 1 if y > 0 else 0
            yp = y + 1 if y < ny - 1 else ny - 1
            for x in range(nx):
                xm = x - 1 if x > 0 else 0
                xp = x + 1 if x < nx - 1 else nx - 1
                n00 = a[ym, xm]; n01 = a[ym, x]; n02 = a[ym, xp]
                n10 = a[y, xm];  n11 = a[y, x];  n12 = a[y, xp]
                n20 = a[yp, xm]; n21 = a[yp, x]; n22 = a[yp, xp]

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
                if var < 0.0:
                    var = 0.0

                gx = (n02 + 2.0 * n12 + n22) - (n00 + 2.0 * n10 + n20)
                gy = (n20 + 2.0 * n21 + n22) - (n00 + 2.0 * n01 + n02)

                i = y * nx + x
                o[i, 0] = n11
                o[i, 1] = mean
                o[i, 2] = sqrt(var)
                o[i, 3] = sqrt(gx * gx + gy * gy)
    return out


def logistic_loss_grad(X, y, w, double b, double w_pos, double w_neg):
    """Class-weighted binary cross-entropy summed over the batch's voxels,
    and its analytic gradient. Each voxel is one SGD sample; see _numpy.py.

    X: (n, k) float64; y: (n,) float64 in {0, 1}; w: (k,) float64. Returns
    (loss, dL/dw, dL/db).
    """
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef Py_ssize_t k = Xv.shape[1]
    grad = np.zeros(k, dtype=np.float64)
    cdef double[::1] gv = grad
    cdef Py_ssize_t i, j
    cdef double z, t, p, c, d, ez, lse
    cdef double loss = 0.0
    cdef double grad_b = 0.0

    with nogil:
        for i in range(n):
            z = b
            for j in range(k):
                z = z + Xv[i, j] * wv[j]
            if yv[i] == 1.0:
                c = w_pos
                t = -z
            else:
                c = w_neg
                t = z
            # one exp per voxel; see _numpy.py for the shared formulation
            ez = exp(-fabs(z))
            lse = log1p(ez)
            loss = loss + c * ((t if t > 0.0 else 0.0) + lse)

            if z >= 0.0:
                p = 1.0 / (1.0 + ez)
            else:
                p = ez / (1.0 + ez)
            d = c * (p - yv[i])
            for j in range(k):
                gv[j] = gv[j] + Xv[i, j] * d
            grad_b = grad_b + d

    return loss, grad, grad_b


def predict_labels(X, w, double b):
    """Hard labels: 1 where X@w + b >= 0. Returns (n,) uint8."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef Py_ssize_t k = Xv.shape[1]
    out = np.empty(n, dtype=np.uint8)
    cdef unsigned char[::1] ov = out
    cdef Py_ssize_t i, j
    cdef double z

    with nogil:
        for i in range(n):
            z = b
            for j in range(k):
                z = z + Xv[i, j] * wv[j]
            ov[i] = 1 if z >= 0.0 else 0
    return out


def overlap_counts(a, b):
    """(intersection, union) of two flat binary uint8 arrays."""
    cdef const unsigned char[::1] av = np.ascontiguousarray(a, dtype=np.uint8).reshape(-1)
    cdef const unsigned char[::1] bv = np.ascontiguousarray(b, dtype=np.uint8).reshape(-1)
    cdef Py_ssize_t n = av.shape[0]
    cdef Py_ssize_t i
    cdef long inter = 0
    cdef long union_ = 0

    with nogil:
        # branchless: mask values are 0/1, so & and | count directly
        for i in range(n):
            inter += av[i] & bv[i]
            union_ += av[i] | bv[i]
    return int(inter), int(union_)
