# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled gather/scatter half of strided 1-D convolution.

im2col copies padded-signal patches into a matrix so the convolution
itself runs as one BLAS product; col2im is its exact adjoint,
scatter-adding patch gradients back onto the padded signal. Both are
memory-bound loops, which is why they live in C; the arithmetic matches
the numpy fallback in backend.py up to float addition order.
"""

import numpy as np

ctypedef fused floating:
    float
    double


def im2col(floating[:, :, ::1] xp, int kernel, int stride, int n_out):
    """Patches of a padded (B, C, Lp) signal as (B * n_out, C * kernel)."""
    cdef Py_ssize_t b = xp.shape[0], c = xp.shape[1], lp = xp.shape[2]
    if (n_out - 1) * stride + kernel > lp:
        raise ValueError("im2col: patches overrun the padded signal")
    if floating is float:
        out_arr = np.empty((b * n_out, c * kernel), dtype=np.float32)
    else:
        out_arr = np.empty((b * n_out, c * kernel), dtype=np.float64)
    cdef floating[:, ::1] out = out_arr
    cdef Py_ssize_t bi, o, ci, k, row, base, col0
    for bi in range(b):
        for o in range(n_out):
            row = bi * n_out + o
            base = o * stride
            for ci in range(c):
                col0 = ci * kernel
                for k in range(kernel):
                    out[row, col0 + k] = xp[bi, ci, base + k]
    return out_arr


def col2im(floating[:, ::1] dcols, int b, int c, int lp,
           int kernel, int stride, int n_out):
    """Adjoint of im2col: scatter-add (B*n_out, C*kernel) onto (B, C, Lp)."""
    if dcols.shape[0] != b * n_out or dcols.shape[1] != c * kernel:
        raise ValueError("col2im: matrix shape disagrees with the geometry")
    if (n_out - 1) * stride + kernel > lp:
        raise ValueError("col2im: patches overrun the padded signal")
    if floating is float:
        out_arr = np.zeros((b, c, lp), dtype=np.float32)
    else:
        out_arr = np.zeros((b, c, lp), dtype=np.float64)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t bi, o, ci, k, row, base, col0
    for bi in range(b):
        for o in range(n_out):
            row = bi * n_out + o
            base = o * stride
            for ci in range(c):
                col0 = ci * kernel
                for k in range(kernel):
                    out[bi, ci, base + k] += dcols[row, col0 + k]
    return out_arr
