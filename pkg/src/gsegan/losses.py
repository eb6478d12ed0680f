"""Training objectives: least-squares adversarial terms, the acoustic
regression term, and the dB-spectrogram power regularizer.

Score targets are a = -1 for fake and unaligned pairs, b = +1 for real
pairs, and c = 0 for the generator's objective. The baseline
discriminator loss averages its three adversarial terms with weight
1/3; the extended variant adds the acoustic regression on the real
pair and reweights all four terms by 1/4. The extended generator loss
is 1/2 adversarial + 1/2 acoustic + the alpha-weighted power term.

Acoustic targets are standardized per column with frozen corpus
statistics before regression (ThetaStats); raw columns span dB, log-Hz
and counts, so an unstandardized MSE would be dominated by the
spectrum columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import SAMPLE_RATE
from .errors import ConfigError, ShapeError
from .features import COL_LOG_F0, COL_VOICED, N_FEATURES
from .nn import ops
from .nn.tensor import Tensor

LSGAN_A = -1.0
LSGAN_B = 1.0
LSGAN_C = 0.0


@dataclass(frozen=True)
class PowerLossConfig:
    alpha: float = 1e-3
    window_ms: int = 20
    stride_ms: int = 10
    fft_size: int = 2048

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("power-loss alpha must be positive")

    @property
    def window(self) -> int:
        return self.window_ms * SAMPLE_RATE // 1000

    @property
    def stride(self) -> int:
        return self.stride_ms * SAMPLE_RATE // 1000


def d_loss_baseline(score_real: Tensor, score_fake: Tensor,
                    score_unaligned: Tensor) -> Tensor:
    total = ops.add(ops.add(ops.mse_const(score_real, LSGAN_B),
                            ops.mse_const(score_fake, LSGAN_A)),
                    ops.mse_const(score_unaligned, LSGAN_A))
    return ops.scale(total, 1.0 / 3.0)


def g_loss_baseline(score_fake: Tensor) -> Tensor:
    return ops.mse_const(score_fake, LSGAN_C)


def d_loss_acoustic(score_real: Tensor, score_fake: Tensor,
                    score_unaligned: Tensor, acoustic_term: Tensor) -> Tensor:
    total = ops.add(ops.add(ops.mse_const(score_real, LSGAN_B), acoustic_term),
                    ops.add(ops.mse_const(score_fake, LSGAN_A),
                            ops.mse_const(score_unaligned, LSGAN_A)))
    return ops.scale(total, 0.25)


def g_loss_acoustic(score_fake: Tensor, acoustic_term: Tensor,
                    power_term: Tensor) -> Tensor:
    adv = ops.scale(ops.mse_const(score_fake, LSGAN_C), 0.5)
    return ops.add(ops.add(adv, ops.scale(acoustic_term, 0.5)), power_term)


def acoustic_loss(pred: Tensor, target: np.ndarray, voiced: np.ndarray) -> Tensor:
    """MSE between predicted and target acoustic matrices.

    pred and target are (..., T, 277); voiced is the raw 0/1 voiced
    flag per frame (..., T). The log-F0 column only counts on voiced
    frames: masked cells contribute neither error nor denominator.
    """
    target = np.asarray(target)
    voiced = np.asarray(voiced)
    if pred.shape != target.shape:
        raise ShapeError(f"acoustic pred {pred.shape} vs target {target.shape}")
    if pred.shape[-1] != N_FEATURES:
        raise ShapeError(f"acoustic matrices must have {N_FEATURES} columns")
    if voiced.shape != pred.shape[:-1]:
        raise ShapeError(f"voiced mask {voiced.shape} vs frames {pred.shape[:-1]}")
    weights = np.ones(pred.shape, dtype=pred.dtype)
    weights[..., COL_LOG_F0] = voiced > 0.5
    count = float(weights.sum())
    return ops.scale(ops.masked_sse(pred, target, weights), 1.0 / max(count, 1.0))


def spectrogram_db(x: Tensor, cfg: PowerLossConfig) -> Tensor:
    """Phi(x): dB power spectrogram of a (B, L) waveform batch."""
    return ops.stft_db(x, cfg.window, cfg.stride, cfg.fft_size)


def power_loss(x_hat: Tensor, x_ref: np.ndarray, cfg: PowerLossConfig) -> Tensor:
    """alpha * mean squared dB-spectrogram difference, gradients flow
    through x_hat only."""
    x_ref = np.asarray(x_ref)
    if x_hat.shape != x_ref.shape:
        raise ShapeError(f"power_loss: {x_hat.shape} vs {x_ref.shape}")
    phi_hat = spectrogram_db(x_hat, cfg)
    with_ref = spectrogram_db(Tensor(x_ref.astype(x_hat.dtype)), cfg)
    return ops.scale(ops.mse_const(phi_hat, with_ref.data), cfg.alpha)


# ----------------------------------------------------- target standardization

_STD_FLOOR = 1e-6


@dataclass
class ThetaStats:
    """Per-column mean/std of acoustic targets over a training sample.

    The log-F0 column's statistics come from voiced frames only; its
    unvoiced cells are sentinel zeros that would otherwise drag the
    mean toward silence.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def from_matrices(cls, matrices: list[np.ndarray]) -> "ThetaStats":
        if not matrices:
            raise ShapeError("cannot compute statistics from zero matrices")
        stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in matrices])
        if stacked.ndim != 2 or stacked.shape[1] != N_FEATURES:
            raise ShapeError(f"expected (T, {N_FEATURES}) matrices")
        mean = stacked.mean(axis=0)
        std = stacked.std(axis=0)
        voiced = stacked[:, COL_VOICED] > 0.5
        if voiced.any():
            f0 = stacked[voiced, COL_LOG_F0]
            mean[COL_LOG_F0] = f0.mean()
            std[COL_LOG_F0] = f0.std()
        return cls(mean=mean, std=np.maximum(std, _STD_FLOOR))

    def standardize(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta)
        if theta.shape[-1] != N_FEATURES:
            raise ShapeError(f"expected {N_FEATURES} columns")
        return (theta - self.mean) / self.std
