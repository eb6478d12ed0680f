"""Finite-difference gradient verification.

Central differences with step h on float64 inputs, compared against the
analytic gradient from one backward pass. The relative error divisor is
floored at 1e-4 so near-zero coordinates are judged on an absolute
scale where finite-difference noise (~1e-10 at h=1e-5) stays far below
any honest tolerance.

Piecewise-linear activations need care: when a perturbation carries a
pre-activation across its kink, the central difference measures a blend
of the two slopes instead of the derivative at the point, and flags a
correct gradient. h_fallbacks re-measures only the flagged coordinates
at smaller steps; the kink-crossing window shrinks with h, so an
artifact clears while a genuinely wrong gradient keeps failing at every
step size.

A coordinate can also land exactly on a kink (a pre-activation within
rounding of zero). No step size helps there: the central difference
averages the two slopes at every h. The loss is still directionally
differentiable, and a correct analytic gradient equals one of the two
one-sided limits, so coordinates that survive the central cascade get a
final comparison against Richardson-extrapolated forward and backward
differences; matching either side passes. A wrong gradient matches
neither, since away from kinks both sides measure the same derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, no_grad


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-4)


@dataclass
class GradReport:
    max_rel_err: float
    n_checked: int
    passed: bool
    worst_input: int = -1
    worst_coord: int = -1

    def __str__(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return (f"gradcheck {status}: max_rel_err={self.max_rel_err:.3e} "
                f"over {self.n_checked} coords")


def grad_check(f, inputs: list[Tensor], tol: float = 1e-5, h: float = 1e-5,
               max_coords_per_input: int | None = None,
               rng: np.random.Generator | None = None,
               h_fallbacks: tuple = ()) -> GradReport:
    """Compare analytic and numeric gradients of a scalar-valued f.

    f maps the given tensors to a scalar Tensor and must be a pure
    function of them (ops that draw randomness must be wrapped to
    replay the same draws on every call). Checks every tensor in
    ``inputs`` with requires_grad set; when max_coords_per_input is
    given, that many coordinates are sampled per input instead of
    sweeping all of them. Coordinates exceeding tol are re-measured at
    each step in h_fallbacks and keep their best agreement; any that
    still fail are compared against one-sided differences in case they
    sit exactly on a piecewise-linear kink.
    """
    for x in inputs:
        if x.data.dtype != np.float64:
            raise ValueError("grad_check requires float64 inputs")
        x.grad = None
    out = f(inputs)
    analytic = []
    out.backward()
    for x in inputs:
        if x.requires_grad and x.grad is None:
            raise ValueError("an input requiring grad received none")
        analytic.append(None if x.grad is None else x.grad.copy())

    with no_grad():
        f0 = float(f(inputs).data)

    worst = 0.0
    worst_input = -1
    worst_coord = -1
    n_checked = 0
    for i, x in enumerate(inputs):
        if not x.requires_grad:
            continue
        flat = x.data.reshape(-1)
        size = flat.size
        if max_coords_per_input is None or max_coords_per_input >= size:
            coords = np.arange(size)
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(size, size=max_coords_per_input, replace=False)
        ga = analytic[i].reshape(-1)

        def eval_at(j: int, delta: float) -> float:
            orig = flat[j]
            flat[j] = orig + delta
            with no_grad():
                val = float(f(inputs).data)
            flat[j] = orig
            return val

        def numeric_at(j: int, step: float) -> float:
            return (eval_at(j, step) - eval_at(j, -step)) / (2.0 * step)

        def onesided_at(j: int, step: float) -> tuple:
            """Richardson-extrapolated forward and backward differences."""
            dp1 = (eval_at(j, step) - f0) / step
            dp2 = (eval_at(j, step / 2) - f0) / (step / 2)
            dm1 = (f0 - eval_at(j, -step)) / step
            dm2 = (f0 - eval_at(j, -step / 2)) / (step / 2)
            return 2.0 * dp2 - dp1, 2.0 * dm2 - dm1

        for j in coords:
            a = float(ga[j])
            rel = _rel_err(a, numeric_at(j, h))
            for h2 in h_fallbacks:
                if rel < tol:
                    break
                rel = min(rel, _rel_err(a, numeric_at(j, h2)))
            if rel >= tol:
                for h2 in (h,) + tuple(h_fallbacks):
                    fwd, bwd = onesided_at(j, h2)
                    rel = min(rel, _rel_err(a, fwd), _rel_err(a, bwd))
                    if rel < tol:
                        break
            n_checked += 1
            if rel > worst:
                worst = rel
                worst_input = i
                worst_coord = int(j)
    return GradReport(max_rel_err=worst, n_checked=n_checked,
                      passed=worst < tol, worst_input=worst_input,
                      worst_coord=worst_coord)
