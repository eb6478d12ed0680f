"""Adam with GAN-style defaults (beta1 = 0.5)."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter


def adam_update(data: np.ndarray, grad: np.ndarray, m: np.ndarray,
                v: np.ndarray, t: int, lr: float, beta1: float = 0.5,
                beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam step, in place on data, m and v.

    t is the 1-based step count after this update.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    data -= lr * mhat / (np.sqrt(vhat) + eps)


class Adam:
    """Tracks first/second moments per parameter; lr is mutable so a
    schedule can switch it between stages without resetting moments."""

    def __init__(self, params: list[Parameter], lr: float, beta1: float = 0.5,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names in optimizer")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {p.name: np.zeros_like(p.data) for p in self.params}
        self._v = {p.name: np.zeros_like(p.data) for p in self.params}

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        """Update every parameter that received a gradient."""
        self.t += 1
        for p in self.params:
            if p.grad is None:
                continue
            adam_update(p.data, p.grad, self._m[p.name], self._v[p.name],
                        self.t, self.lr, self.beta1, self.beta2, self.eps)

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "lr": self.lr,
            "m": {k: v.copy() for k, v in self._m.items()},
            "v": {k: v.copy() for k, v in self._v.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.lr = float(state["lr"])
        for name in self._m:
            self._m[name][...] = state["m"][name]
            self._v[name][...] = state["v"][name]
