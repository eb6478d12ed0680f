"""Whole-package gradient audit.

Builds a small float64 instance of every differentiable op and of both
networks, and checks analytic gradients against central differences.
Expensive cases sample a few coordinates per input; the op zoo sweeps
everything. Intended both as a developer command and as a regression
gate: the audit passes only if the worst relative error over all cases
and seeds stays below tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .nn import Tensor, grad_check, ops
from .segan import (DiscriminatorConfig, GeneratorConfig, build_discriminator,
                    build_generator)

_MODEL_LENGTH = 1024


def _t(rng, *shape, scale=1.0) -> Tensor:
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


def op_cases(rng: np.random.Generator) -> list:
    """(name, f, inputs) triples covering every differentiable op."""
    cases = []

    def case(name, f, inputs):
        cases.append((name, f, inputs))

    a, b = _t(rng, 2, 3, 8), _t(rng, 2, 3, 8)
    case("add", lambda i: ops.sum_all(ops.add(i[0], i[1])), [a, b])
    case("sub", lambda i: ops.sum_all(ops.sub(i[0], i[1])),
         [_t(rng, 4, 5), _t(rng, 4, 5)])
    case("mul", lambda i: ops.sum_all(ops.mul(i[0], i[1])),
         [_t(rng, 3, 7), _t(rng, 3, 7)])
    case("scale", lambda i: ops.sum_all(ops.scale(i[0], -1.7)), [_t(rng, 6)])
    case("square", lambda i: ops.sum_all(ops.square(i[0])), [_t(rng, 3, 4)])
    case("sum_all", lambda i: ops.sum_all(i[0]), [_t(rng, 2, 5)])
    case("mean_all", lambda i: ops.mean_all(i[0]), [_t(rng, 2, 5)])
    case("tanh", lambda i: ops.sum_all(ops.square(ops.tanh(i[0]))),
         [_t(rng, 2, 9)])
    case("prelu_channel",
         lambda i: ops.sum_all(ops.square(ops.prelu(i[0], i[1], axis=1))),
         [_t(rng, 2, 3, 6), Tensor(0.25 + 0.1 * rng.standard_normal(3),
                                   requires_grad=True)])
    case("prelu_last",
         lambda i: ops.sum_all(ops.square(ops.prelu(i[0], i[1], axis=-1))),
         [_t(rng, 4, 5), Tensor(0.25 + 0.1 * rng.standard_normal(5),
                                requires_grad=True)])
    case("reshape",
         lambda i: ops.sum_all(ops.square(ops.reshape(i[0], (2, 12)))),
         [_t(rng, 2, 3, 4)])
    case("transpose_12",
         lambda i: ops.sum_all(ops.square(ops.transpose_12(i[0]))),
         [_t(rng, 2, 3, 4)])
    case("concat_channels",
         lambda i: ops.sum_all(ops.square(ops.concat_channels(i[0], i[1]))),
         [_t(rng, 2, 3, 5), _t(rng, 2, 2, 5)])
    case("slice_rows",
         lambda i: ops.sum_all(ops.square(ops.slice_rows(i[0], 1, 3))),
         [_t(rng, 4, 6)])
    case("channel_scale",
         lambda i: ops.sum_all(ops.square(ops.channel_scale(i[0], i[1]))),
         [_t(rng, 2, 3, 5), _t(rng, 3)])
    case("linear",
         lambda i: ops.sum_all(ops.square(ops.linear(i[0], i[1], i[2]))),
         [_t(rng, 2, 4, 6), _t(rng, 3, 6), _t(rng, 3)])
    # mean keeps these losses O(1); a large sum would push rounding
    # noise in the difference quotient toward the tolerance
    for stride in (1, 4):
        case(f"conv1d_s{stride}",
             lambda i, s=stride: ops.mean_all(
                 ops.square(ops.conv1d(i[0], i[1], i[2], s))),
             [_t(rng, 2, 3, 12), _t(rng, 4, 3, 5), _t(rng, 4)])
        case(f"conv1d_transposed_s{stride}",
             lambda i, s=stride: ops.mean_all(
                 ops.square(ops.conv1d_transposed(i[0], i[1], i[2], s))),
             [_t(rng, 2, 3, 6), _t(rng, 3, 4, 5), _t(rng, 4)])
    shuffle_seed = int(rng.integers(1 << 31))
    case("phase_shuffle",
         lambda i: ops.sum_all(ops.square(ops.phase_shuffle(
             i[0], 3, np.random.default_rng(shuffle_seed)))),
         [_t(rng, 3, 2, 10)])
    # squared dB values average in the hundreds; scaling keeps the loss
    # O(1) so finite-difference cancellation noise stays below tolerance
    case("stft_db",
         lambda i: ops.scale(ops.mean_all(
             ops.square(ops.stft_db(i[0], 8, 4, 16))), 1e-3),
         [_t(rng, 2, 48, scale=0.5)])
    target = rng.standard_normal((3, 4))
    case("mse_const", lambda i: ops.mse_const(i[0], target), [_t(rng, 3, 4)])
    weights = (rng.random((3, 4)) > 0.3).astype(np.float64)
    case("masked_sse", lambda i: ops.masked_sse(i[0], target, weights),
         [_t(rng, 3, 4)])

    from .nn.tensor import Parameter
    p = Parameter("w", rng.standard_normal((4, 6)))
    ops.init_spectral(p, rng)
    ops.update_spectral(p, 3)
    case("spectral_weight",
         lambda i: ops.sum_all(ops.square(ops.spectral_weight(p))),
         [p.tensor])
    return cases


def model_cases(rng: np.random.Generator, width_scale: float) -> list:
    """Scalar losses through the full generator and discriminator."""
    cases = []
    batch = 2

    gen = build_generator(GeneratorConfig(width_scale=width_scale), rng,
                          dtype=np.float64)
    gx = _t(rng, batch, 1, _MODEL_LENGTH, scale=0.4)
    gz = gen.sample_latent(rng, batch, _MODEL_LENGTH)
    mix = rng.standard_normal((batch, 1, _MODEL_LENGTH))

    def g_loss(inputs):
        y = gen.forward(inputs[0], gz)
        return ops.mean_all(ops.square(ops.mul(y, Tensor(mix))))

    cases.append(("generator", g_loss,
                  [gx] + [p.tensor for p in gen.parameters()]))

    dis = build_discriminator(
        DiscriminatorConfig(width_scale=width_scale,
                            input_length=_MODEL_LENGTH), rng,
        dtype=np.float64)
    ds = _t(rng, batch, 1, _MODEL_LENGTH, scale=0.4)
    dc = _t(rng, batch, 1, _MODEL_LENGTH, scale=0.4)
    shuffle_seed = int(rng.integers(1 << 31))

    def d_loss(inputs):
        out = dis.forward(inputs[0], inputs[1],
                          shuffle_rng=np.random.default_rng(shuffle_seed),
                          want_acoustic=True)
        adv = ops.mean_all(ops.square(out.score))
        aco = ops.mean_all(ops.square(out.acoustic_pred))
        return ops.add(adv, aco)

    cases.append(("discriminator", d_loss,
                  [ds, dc] + [p.tensor for p in dis.parameters()]))
    return cases


@dataclass
class CaseResult:
    name: str
    seed: int
    max_rel_err: float
    n_checked: int


@dataclass
class SuiteReport:
    results: list
    max_rel_err: float
    n_checks: int
    tol: float
    elapsed_s: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def worst(self) -> CaseResult:
        return max(self.results, key=lambda r: r.max_rel_err)

    def table(self) -> str:
        by_name: dict = {}
        for r in self.results:
            cur = by_name.get(r.name)
            if cur is None or r.max_rel_err > cur.max_rel_err:
                by_name[r.name] = r
        lines = [f"{'case':28s} {'worst rel err':>14s} {'coords':>8s}"]
        for name in sorted(by_name):
            r = by_name[name]
            total = sum(x.n_checked for x in self.results if x.name == name)
            lines.append(f"{name:28s} {r.max_rel_err:14.3e} {total:8d}")
        status = "PASS" if self.passed else "FAIL"
        lines.append(f"{status}: max_rel_err={self.max_rel_err:.3e} over "
                     f"{self.n_checks} coordinates "
                     f"({self.elapsed_s:.1f}s)")
        return "\n".join(lines)


def run_suite(seeds=tuple(range(20)), tol: float = 1e-5,
              width_scale: float = 1.0 / 16.0, include_models: bool = True,
              model_coords: int = 3, op_coords: int | None = None) -> SuiteReport:
    """Gradient-check every op (and optionally both models) per seed."""
    t0 = time.time()
    results = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        cases = op_cases(rng)
        if include_models:
            cases += model_cases(rng, width_scale)
        for name, f, inputs in cases:
            coords = model_coords if name in ("generator",
                                              "discriminator") else op_coords
            rep = grad_check(f, inputs, tol=tol,
                             max_coords_per_input=coords,
                             rng=np.random.default_rng(seed + 1),
                             h_fallbacks=(1e-6, 1e-7, 1e-8))
            results.append(CaseResult(name=name, seed=seed,
                                      max_rel_err=rep.max_rel_err,
                                      n_checked=rep.n_checked))
    worst = max(r.max_rel_err for r in results)
    return SuiteReport(results=results, max_rel_err=worst,
                       n_checks=sum(r.n_checked for r in results), tol=tol,
                       elapsed_s=time.time() - t0)
