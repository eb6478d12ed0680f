"""Strided-convolution kernels: compiled core with a numpy fallback.

The compiled extension implements the memory-bound gather/scatter half
of stride-S convolution (im2col / col2im); the matrix products run on
BLAS either way. The backend is picked once at import: compiled when
the extension built, numpy otherwise. Set GSEGAN_BACKEND=numpy or
GSEGAN_BACKEND=compiled to force one (forcing compiled without the
extension is an error).

All convolutions use same-style symmetric zero padding, so a stride-S
conv maps length L to ceil(L / S) and the transposed conv maps L to
L * S exactly.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from . import _convcore as _core
except ImportError:
    _core = None

_forced = os.environ.get("GSEGAN_BACKEND", "").lower()
if _forced == "numpy":
    _core = None
elif _forced == "compiled" and _core is None:
    raise ImportError("GSEGAN_BACKEND=compiled but the extension is not built")
elif _forced not in ("", "numpy", "compiled"):
    raise ImportError(f"unknown GSEGAN_BACKEND value {_forced!r}")

BACKEND = "compiled" if _core is not None else "numpy"


def conv_geometry(length: int, kernel: int, stride: int):
    """(n_out, pad_left, pad_right) for same-style padding."""
    n_out = -(-length // stride)
    total = max(0, (n_out - 1) * stride + kernel - length)
    return n_out, total // 2, total - total // 2


def _im2col_np(xp: np.ndarray, kernel: int, stride: int, n_out: int) -> np.ndarray:
    b, c, lp = xp.shape
    s0, s1, s2 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, (b, n_out, c, kernel), (s0, s2 * stride, s1, s2))
    return np.ascontiguousarray(view).reshape(b * n_out, c * kernel)


def _col2im_np(dcols: np.ndarray, b: int, c: int, lp: int,
               kernel: int, stride: int, n_out: int) -> np.ndarray:
    dc = dcols.reshape(b, n_out, c, kernel)
    dxp = np.zeros((b, c, lp), dtype=dcols.dtype)
    for k in range(kernel):
        dxp[:, :, k:k + n_out * stride:stride] += dc[:, :, :, k].transpose(0, 2, 1)
    return dxp


def im2col(xp: np.ndarray, kernel: int, stride: int, n_out: int) -> np.ndarray:
    """Patches of a padded (B, C, Lp) signal as (B * n_out, C * kernel)."""
    if _core is not None:
        return _core.im2col(np.ascontiguousarray(xp), kernel, stride, n_out)
    return _im2col_np(xp, kernel, stride, n_out)


def col2im(dcols: np.ndarray, b: int, c: int, lp: int,
           kernel: int, stride: int, n_out: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add patches back to (B, C, Lp)."""
    if _core is not None:
        return _core.col2im(np.ascontiguousarray(dcols), b, c, lp, kernel,
                            stride, n_out)
    return _col2im_np(dcols, b, c, lp, kernel, stride, n_out)


def conv_forward(x: np.ndarray, w: np.ndarray, stride: int):
    """y = conv(x, w). x (B, Ci, L), w (Co, Ci, K) -> (B, Co, ceil(L/S)).

    Returns (y, xp); the padded input is reused by the weight gradient.
    """
    b, ci, length = x.shape
    co, k = w.shape[0], w.shape[2]
    n_out, pl, pr = conv_geometry(length, k, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (pl, pr)))
    cols = im2col(xp, k, stride, n_out)
    y2 = cols @ w.reshape(co, ci * k).T
    y = np.ascontiguousarray(y2.reshape(b, n_out, co).transpose(0, 2, 1))
    return y, xp


def conv_backward_input(dy: np.ndarray, w: np.ndarray, stride: int,
                        length: int) -> np.ndarray:
    """Gradient w.r.t. the conv input; also the transposed-conv forward."""
    b, co, n_out = dy.shape
    ci, k = w.shape[1], w.shape[2]
    _, pl, pr = conv_geometry(length, k, stride)
    lp = length + pl + pr
    dy2 = np.ascontiguousarray(dy.transpose(0, 2, 1)).reshape(b * n_out, co)
    dcols = dy2 @ w.reshape(co, ci * k)
    dxp = col2im(dcols, b, ci, lp, k, stride, n_out)
    return np.ascontiguousarray(dxp[:, :, pl:lp - pr])


def conv_backward_weight(dy: np.ndarray, xp: np.ndarray, stride: int,
                         kernel: int) -> np.ndarray:
    """Gradient w.r.t. the conv weight from the padded input."""
    b, co, n_out = dy.shape
    ci = xp.shape[1]
    cols = im2col(xp, kernel, stride, n_out)
    dy2 = np.ascontiguousarray(dy.transpose(0, 2, 1)).reshape(b * n_out, co)
    return (dy2.T @ cols).reshape(co, ci, kernel)
