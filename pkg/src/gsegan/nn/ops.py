"""Differentiable ops over Tensor.

Each op computes its forward result eagerly, then (when a parent
requires grad) attaches a closure that routes the output gradient to
the parents. Convolutions delegate the heavy gather/scatter + GEMM
work to the selected backend.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import backend
from .tensor import Parameter, Tensor, accumulate, make


def _as_dtype(value, dtype):
    return np.asarray(value, dtype=dtype)


# ---------------------------------------------------------------- arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    out = make(a.data + b.data, a, b)
    if out.requires_grad:
        def backward():
            accumulate(a, out.grad)
            accumulate(b, out.grad)
        out._backward = backward
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} differ")
    out = make(a.data - b.data, a, b)
    if out.requires_grad:
        def backward():
            accumulate(a, out.grad)
            accumulate(b, -out.grad)
        out._backward = backward
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    out = make(a.data * b.data, a, b)
    if out.requires_grad:
        def backward():
            accumulate(a, out.grad * b.data)
            accumulate(b, out.grad * a.data)
        out._backward = backward
    return out


def scale(x: Tensor, s: float) -> Tensor:
    s = float(s)
    out = make(x.data * _as_dtype(s, x.dtype), x)
    if out.requires_grad:
        def backward():
            accumulate(x, out.grad * s)
        out._backward = backward
    return out


def square(x: Tensor) -> Tensor:
    out = make(x.data * x.data, x)
    if out.requires_grad:
        def backward():
            accumulate(x, out.grad * (2.0 * x.data))
        out._backward = backward
    return out


def sum_all(x: Tensor) -> Tensor:
    out = make(x.data.sum(), x)
    if out.requires_grad:
        def backward():
            accumulate(x, np.broadcast_to(out.grad, x.shape))
        out._backward = backward
    return out


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out = make(x.data.mean(), x)
    if out.requires_grad:
        def backward():
            accumulate(x, np.broadcast_to(out.grad / n, x.shape))
        out._backward = backward
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = make(y, x)
    if out.requires_grad:
        def backward():
            accumulate(x, out.grad * (1.0 - y * y))
        out._backward = backward
    return out


def prelu(x: Tensor, alpha: Tensor, axis: int = 1) -> Tensor:
    """max(x, 0) + alpha * min(x, 0) with one slope per channel.

    ``axis`` names the channel axis of x; alpha is 1-D with that size.
    """
    if alpha.ndim != 1 or x.shape[axis] != alpha.shape[0]:
        raise ShapeError(f"prelu: alpha {alpha.shape} does not match axis {axis} of {x.shape}")
    bshape = [1] * x.ndim
    bshape[axis] = alpha.shape[0]
    a = alpha.data.reshape(bshape)
    neg = np.minimum(x.data, 0.0)
    pos = np.maximum(x.data, 0.0)
    out = make(pos + a * neg, x, alpha)
    if out.requires_grad:
        def backward():
            g = out.grad
            accumulate(x, g * np.where(x.data > 0.0, _as_dtype(1.0, x.dtype), a))
            reduce_axes = tuple(i for i in range(x.ndim) if i != (axis % x.ndim))
            accumulate(alpha, (g * neg).sum(axis=reduce_axes))
        out._backward = backward
    return out


# ---------------------------------------------------------------- structure

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = make(np.ascontiguousarray(x.data).reshape(shape), x)
    if out.requires_grad:
        def backward():
            accumulate(x, out.grad.reshape(x.shape))
        out._backward = backward
    return out


def transpose_12(x: Tensor) -> Tensor:
    """Swap axes 1 and 2 of a 3-D tensor ((B, C, T) <-> (B, T, C))."""
    if x.ndim != 3:
        raise ShapeError("transpose_12 expects a 3-D tensor")
    out = make(np.ascontiguousarray(x.data.transpose(0, 2, 1)), x)
    if out.requires_grad:
        def backward():
            accumulate(x, np.ascontiguousarray(out.grad.transpose(0, 2, 1)))
        out._backward = backward
    return out


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two (B, C, L) tensors along the channel axis."""
    if a.ndim != 3 or b.ndim != 3:
        raise ShapeError("concat_channels expects 3-D tensors")
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ShapeError(f"concat_channels: {a.shape} and {b.shape} disagree outside axis 1")
    ca = a.shape[1]
    out = make(np.concatenate([a.data, b.data], axis=1), a, b)
    if out.requires_grad:
        def backward():
            accumulate(a, out.grad[:, :ca])
            accumulate(b, out.grad[:, ca:])
        out._backward = backward
    return out


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Rows [start, stop) along axis 0."""
    out = make(x.data[start:stop].copy(), x)
    if out.requires_grad:
        def backward():
            g = np.zeros_like(x.data)
            g[start:stop] = out.grad
            accumulate(x, g)
        out._backward = backward
    return out


def channel_scale(x: Tensor, g: Tensor) -> Tensor:
    """Per-channel gains: (B, C, L) * g[C], one learnable gain per channel."""
    if x.ndim != 3 or g.ndim != 1 or x.shape[1] != g.shape[0]:
        raise ShapeError(f"channel_scale: {x.shape} vs gains {g.shape}")
    gb = g.data[None, :, None]
    out = make(x.data * gb, x, g)
    if out.requires_grad:
        def backward():
            accumulate(x, out.grad * gb)
            accumulate(g, (out.grad * x.data).sum(axis=(0, 2)))
        out._backward = backward
    return out


# ------------------------------------------------------------------- linear

def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w.T + b with w (out_features, in_features)."""
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} vs weight {w.shape}")
    y = x.data @ w.data.T
    if b is not None:
        y = y + b.data
    parents = (x, w) if b is None else (x, w, b)
    out = make(y, *parents)
    if out.requires_grad:
        def backward():
            g = out.grad
            g2 = g.reshape(-1, w.shape[0])
            if x.requires_grad:
                accumulate(x, (g2 @ w.data).reshape(x.shape))
            if w.requires_grad:
                accumulate(w, g2.T @ x.data.reshape(-1, w.shape[1]))
            if b is not None and b.requires_grad:
                accumulate(b, g2.sum(axis=0))
        out._backward = backward
    return out


# ------------------------------------------------------------- convolutions

def conv1d(x: Tensor, w: Tensor, b: Tensor | None, stride: int) -> Tensor:
    """Strided 1-D convolution with same-style padding.

    x (B, Ci, L), w (Co, Ci, K) -> (B, Co, ceil(L / stride)).
    """
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} vs weight {w.shape}")
    length = x.shape[2]
    kernel = w.shape[2]
    y, xp = backend.conv_forward(x.data, w.data, stride)
    if b is not None:
        y += b.data[None, :, None]
    parents = (x, w) if b is None else (x, w, b)
    out = make(y, *parents)
    if out.requires_grad:
        def backward():
            g = out.grad
            if x.requires_grad:
                accumulate(x, backend.conv_backward_input(g, w.data, stride, length))
            if w.requires_grad:
                accumulate(w, backend.conv_backward_weight(g, xp, stride, kernel))
            if b is not None and b.requires_grad:
                accumulate(b, g.sum(axis=(0, 2)))
        out._backward = backward
    return out


def conv1d_transposed(x: Tensor, w: Tensor, b: Tensor | None, stride: int) -> Tensor:
    """Exact adjoint of conv1d: x (B, Ci, L), w (Ci, Co, K) -> (B, Co, L * stride).

    Implemented as the input-gradient of the matching forward conv, so
    <conv1d(u), v> == <u, conv1d_transposed(v)> holds by construction.
    """
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"conv1d_transposed: input {x.shape} vs weight {w.shape}")
    out_len = x.shape[2] * stride
    kernel = w.shape[2]
    y = backend.conv_backward_input(x.data, w.data, stride, out_len)
    if b is not None:
        y += b.data[None, :, None]
    parents = (x, w) if b is None else (x, w, b)
    out = make(y, *parents)
    if out.requires_grad:
        def backward():
            g = out.grad
            if x.requires_grad:
                dx, gp = backend.conv_forward(g, w.data, stride)
                accumulate(x, dx)
            elif w.requires_grad:
                _, pl, pr = backend.conv_geometry(out_len, kernel, stride)
                gp = np.pad(g, ((0, 0), (0, 0), (pl, pr)))
            if w.requires_grad:
                accumulate(w, backend.conv_backward_weight(x.data, gp, stride, kernel))
            if b is not None and b.requires_grad:
                accumulate(b, g.sum(axis=(0, 2)))
        out._backward = backward
    return out


# ------------------------------------------------------------ phase shuffle

def _reflect_index(i: np.ndarray, n: int) -> np.ndarray:
    period = 2 * n - 2
    j = np.abs(i) % period
    return np.where(j >= n, period - j, j)


def phase_shuffle(x: Tensor, n: int, rng: np.random.Generator) -> Tensor:
    """Shift each batch item along time by s ~ U{-n..n}, reflecting edges.

    out[i] = x[reflect(i - s)]; the same shift applies to every channel
    of an item. One integer per batch item is drawn from rng.
    """
    if x.ndim != 3:
        raise ShapeError("phase_shuffle expects (B, C, L)")
    batch, _, length = x.shape
    shifts = rng.integers(-n, n + 1, size=batch)
    if length == 1:
        # Every shift reflects back onto the single sample; still draw
        # the shifts so rng consumption does not depend on map length.
        idx = np.zeros((batch, 1), dtype=np.int64)
    else:
        pos = np.arange(length)
        idx = np.stack([_reflect_index(pos - s, length) for s in shifts])
    out = make(np.take_along_axis(x.data, idx[:, None, :], axis=2), x)
    if out.requires_grad:
        def backward():
            g = out.grad
            dx = np.zeros_like(x.data)
            np.add.at(
                dx,
                (np.arange(batch)[:, None, None],
                 np.arange(x.shape[1])[None, :, None],
                 idx[:, None, :]),
                g)
            accumulate(x, dx)
        out._backward = backward
    return out


# --------------------------------------------------------------- spectrogram

def stft_db(x: Tensor, window: int, stride: int, fft_size: int) -> Tensor:
    """Hann-window power spectrogram in dB: (B, L) -> (B, T, fft_size//2 + 1).

    Matches features.stft_magnitude_db numerically (the magnitude floor
    1e-10 becomes a power floor 1e-20; below it the gradient is zero).
    """
    from ..features import _hann, frame_indices

    if x.ndim != 2:
        raise ShapeError("stft_db expects (B, L)")
    length = x.shape[1]
    idx = frame_indices(length, window, stride)
    win = _hann(window).astype(x.dtype)
    frames = x.data[:, idx]
    fw = frames * win
    spec = np.fft.rfft(fw, n=fft_size, axis=-1)
    power = spec.real ** 2 + spec.imag ** 2
    floor = 1e-20
    out = make(10.0 * np.log10(np.maximum(power, floor)), x)
    if out.requires_grad:
        def backward():
            g = out.grad
            live = power > floor
            dpow = np.where(live, g * (10.0 / np.log(10.0)) / np.maximum(power, floor), 0.0)
            gc = 2.0 * dpow * spec
            # Adjoint of one-sided rfft: dfw[n] = sum_k Re(gc_k e^{2pi i k n / N}).
            # irfft halves interior bins, so pre-scale; DC/Nyquist grads are real.
            h = gc * (fft_size / 2.0)
            h[..., 0] *= 2.0
            if fft_size % 2 == 0:
                h[..., -1] *= 2.0
            dfw = np.fft.irfft(h, n=fft_size, axis=-1)[..., :window]
            dframes = dfw * win
            dx = np.zeros_like(x.data)
            np.add.at(dx, (np.arange(x.shape[0])[:, None, None], idx[None, :, :]),
                      dframes)
            accumulate(x, dx)
        out._backward = backward
    return out


# -------------------------------------------------------------- loss kernels

def mse_const(x: Tensor, target) -> Tensor:
    """Mean squared error against a constant (scalar or array) target."""
    t = _as_dtype(target, x.dtype)
    if t.ndim and t.shape != x.shape:
        raise ShapeError(f"mse_const: target {t.shape} vs input {x.shape}")
    diff = x.data - t
    out = make(np.mean(diff * diff), x)
    if out.requires_grad:
        def backward():
            accumulate(x, out.grad * (2.0 / x.data.size) * diff)
        out._backward = backward
    return out


def masked_sse(x: Tensor, target, weights) -> Tensor:
    """sum(weights * (x - target)^2) with constant target and weights."""
    t = _as_dtype(target, x.dtype)
    w = _as_dtype(weights, x.dtype)
    if t.shape != x.shape or w.shape != x.shape:
        raise ShapeError("masked_sse: target/weights must match input shape")
    diff = x.data - t
    out = make(np.sum(w * diff * diff), x)
    if out.requires_grad:
        def backward():
            accumulate(x, out.grad * 2.0 * w * diff)
        out._backward = backward
    return out


# ------------------------------------------------------------ spectral norm

_SN_EPS = 1e-12


def _l2_normalize(v: np.ndarray) -> np.ndarray:
    return v / (np.linalg.norm(v) + _SN_EPS)


def init_spectral(param: Parameter, rng: np.random.Generator) -> None:
    """Attach power-iteration state (u, v) to a weight parameter."""
    w2 = param.data.reshape(param.data.shape[0], -1)
    param.spectral_u = _l2_normalize(rng.standard_normal(w2.shape[0])).astype(param.data.dtype)
    param.spectral_v = _l2_normalize(rng.standard_normal(w2.shape[1])).astype(param.data.dtype)


def update_spectral(param: Parameter, iterations: int = 1) -> None:
    """Run power-iteration steps in place on the parameter's (u, v)."""
    if param.spectral_u is None:
        raise ShapeError(f"parameter {param.name} has no spectral state")
    w2 = param.data.reshape(param.data.shape[0], -1)
    u = param.spectral_u
    v = param.spectral_v
    for _ in range(iterations):
        v = _l2_normalize(w2.T @ u)
        u = _l2_normalize(w2 @ v)
    param.spectral_u = u.astype(param.data.dtype)
    param.spectral_v = v.astype(param.data.dtype)


def spectral_sigma(param: Parameter) -> float:
    w2 = param.data.reshape(param.data.shape[0], -1)
    return float(param.spectral_u @ (w2 @ param.spectral_v))


def spectral_weight(param: Parameter) -> Tensor:
    """W / sigma_hat with sigma_hat = u^T W v; u, v are constants here.

    The power-iteration update is a separate non-differentiable step
    (update_spectral), so the backward treats u and v as fixed.
    """
    if param.spectral_u is None:
        raise ShapeError(f"parameter {param.name} has no spectral state")
    w = param.tensor
    u = param.spectral_u
    v = param.spectral_v
    w2 = w.data.reshape(w.data.shape[0], -1)
    sigma = float(u @ (w2 @ v))
    sigma = max(sigma, _SN_EPS)
    out = make(w.data / sigma, w)
    if out.requires_grad:
        def backward():
            g = out.grad
            inner = float(np.sum(g * w.data))
            duv = np.outer(u, v).reshape(w.data.shape)
            accumulate(w, g / sigma - (inner / (sigma * sigma)) * duv)
        out._backward = backward
    return out
