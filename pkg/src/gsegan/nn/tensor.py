"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray plus an optional gradient. Ops (see ops.py)
record a backward closure and parent links on their outputs; calling
``backward()`` on a scalar walks the recorded graph once in reverse
topological order and accumulates gradients into every tensor that
requires them. Graphs are single-use: build, backward, discard.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError

_grad_enabled = True
_nan_check = False


class no_grad:
    """Context manager that disables graph recording inside its body."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, exc_type, exc, tb):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


def set_nan_check(enabled: bool) -> None:
    """When enabled, any op producing a non-finite value raises at once.

    A debugging aid: it pinpoints the op that first went non-finite
    instead of letting NaNs surface later in an unrelated loss value.
    """
    global _nan_check
    _nan_check = bool(enabled)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise ShapeError("backward() starts from a scalar tensor")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()
                node._backward = None


def make(data: np.ndarray, *parents: Tensor) -> Tensor:
    """Wrap an op result, linking parents when a gradient will flow."""
    if _nan_check and not np.all(np.isfinite(data)):
        raise FloatingPointError("op produced a non-finite value")
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = parents
    return out


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """Add a gradient contribution to a tensor, if it wants one."""
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=t.data.dtype)
    if g.shape != t.data.shape:
        raise ShapeError(f"gradient shape {g.shape} != data shape {t.data.shape}")
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


class Parameter:
    """A named trainable tensor, plus power-iteration state when
    the owning layer is spectrally normalized."""

    def __init__(self, name: str, data):
        self.name = name
        self.tensor = Tensor(np.asarray(data), requires_grad=True)
        self.spectral_u = None
        self.spectral_v = None

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @data.setter
    def data(self, value: np.ndarray) -> None:
        self.tensor.data = np.asarray(value, dtype=self.tensor.data.dtype)

    @property
    def grad(self):
        return self.tensor.grad

    @property
    def shape(self):
        return self.tensor.data.shape

    def zero_grad(self) -> None:
        self.tensor.grad = None

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.tensor.data.shape})"
