"""Enhancement generator and conditioned discriminator.

The generator is a symmetric encoder-decoder over raw waveforms: five
stride-4 convolutions (kernel 31, PReLU) down to a bottleneck, a latent
noise tensor concatenated channel-wise, then five stride-4 transposed
convolutions back up, PReLU except a final tanh. Encoder activations
re-enter the decoder through learnable per-channel gains added at the
matching resolution.

The discriminator stacks the test signal and its conditioning signal as
two input channels, runs five spectrally-normalized stride-4
convolutions (PReLU + phase shuffle), and ends in a 256-unit MLP that
emits one adversarial score. A regression branch taps the activations
of an intermediate conv layer (before that layer's shuffle, so frames
stay aligned) and maps each time frame through a small MLP to the
277-dimensional acoustic descriptor.

``width_scale`` multiplies every channel count (minimum 1) so the full
test suite can exercise real training at 1/16 width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .features import N_FEATURES
from .nn import ops
from .nn.tensor import Parameter, Tensor


def scaled_width(base: int, width_scale: float) -> int:
    return max(1, int(round(base * width_scale)))


@dataclass(frozen=True)
class GeneratorConfig:
    kernel_width: int = 31
    encoder_maps: tuple = (64, 128, 256, 512, 1024)
    decoder_maps: tuple = (512, 256, 128, 64, 1)
    stride: int = 4
    width_scale: float = 1.0

    def __post_init__(self):
        if len(self.encoder_maps) != len(self.decoder_maps):
            raise ConfigError("encoder and decoder depths must match")
        if self.decoder_maps[-1] != 1:
            raise ConfigError("final decoder map must be 1 (waveform out)")
        if self.width_scale <= 0:
            raise ConfigError("width_scale must be positive")

    @property
    def depth(self) -> int:
        return len(self.encoder_maps)

    @property
    def block(self) -> int:
        """Input lengths must be divisible by this (stride ** depth)."""
        return self.stride ** self.depth

    def scaled_encoder_maps(self) -> tuple:
        return tuple(scaled_width(m, self.width_scale) for m in self.encoder_maps)

    def scaled_decoder_maps(self) -> tuple:
        # The last decoder map is the waveform channel and never scales.
        inner = tuple(scaled_width(m, self.width_scale) for m in self.decoder_maps[:-1])
        return inner + (1,)

    def bottleneck_shape(self, length: int) -> tuple:
        return (self.scaled_encoder_maps()[-1], length // self.block)


@dataclass(frozen=True)
class DiscriminatorConfig:
    conv_maps: tuple = (64, 128, 256, 512, 1024)
    kernel_width: int = 31
    stride: int = 4
    mlp_hidden: int = 256
    acoustic_branch_layer: int = 4
    acoustic_hidden: int = 128
    acoustic_out: int = N_FEATURES
    width_scale: float = 1.0
    input_length: int = 16384
    shuffle_n: int = 5

    def __post_init__(self):
        if not 1 <= self.acoustic_branch_layer <= len(self.conv_maps):
            raise ConfigError("acoustic_branch_layer out of range")
        if self.width_scale <= 0:
            raise ConfigError("width_scale must be positive")
        if self.input_length % self.stride ** len(self.conv_maps) != 0:
            raise ConfigError("input_length must divide by the total stride")

    @property
    def depth(self) -> int:
        return len(self.conv_maps)

    def scaled_conv_maps(self) -> tuple:
        return tuple(scaled_width(m, self.width_scale) for m in self.conv_maps)

    def scaled_mlp_hidden(self) -> int:
        return scaled_width(self.mlp_hidden, self.width_scale)

    def scaled_acoustic_hidden(self) -> int:
        return scaled_width(self.acoustic_hidden, self.width_scale)

    def trunk_features(self) -> int:
        """Flattened feature count entering the score MLP."""
        return self.scaled_conv_maps()[-1] * (self.input_length // self.stride ** self.depth)


@dataclass
class DiscriminatorOutput:
    score: Tensor
    acoustic_pred: Tensor | None = None


class _ParamStore:
    """Shared bookkeeping: ordered named parameters plus state I/O."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def _new(self, name: str, data: np.ndarray) -> Parameter:
        if name in self._params:
            raise ConfigError(f"duplicate parameter {name!r}")
        p = Parameter(name, data)
        self._params[name] = p
        return p

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def param(self, name: str) -> Parameter:
        return self._params[name]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def requires_grad_(self, flag: bool) -> None:
        for p in self._params.values():
            p.tensor.requires_grad = bool(flag)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {}
        for name, p in self._params.items():
            state[name] = p.data.copy()
            if p.spectral_u is not None:
                state[name + ".sn_u"] = p.spectral_u.copy()
                state[name + ".sn_v"] = p.spectral_v.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = set()
        for name, p in self._params.items():
            expected.add(name)
            if name not in state:
                raise ShapeError(f"missing parameter {name!r} in state")
            if tuple(state[name].shape) != p.data.shape:
                raise ShapeError(f"shape mismatch for {name!r}")
            p.data = state[name]
            if p.spectral_u is not None:
                expected.add(name + ".sn_u")
                expected.add(name + ".sn_v")
                p.spectral_u = np.asarray(state[name + ".sn_u"], dtype=p.data.dtype)
                p.spectral_v = np.asarray(state[name + ".sn_v"], dtype=p.data.dtype)
        extra = set(state) - expected
        if extra:
            raise ShapeError(f"unexpected entries in state: {sorted(extra)}")


_PRELU_INIT = 0.25


def _he_std(fan_in: int) -> float:
    """Fan-in-scaled init std. Nothing in these stacks renormalizes
    activations, so per-layer gain must stay near 1: the encoder output
    has to reach the bottleneck at the latent's scale or the decoder
    starts out effectively unconditional."""
    return float(np.sqrt(2.0 / fan_in))


class Generator(_ParamStore):
    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        k = cfg.kernel_width
        enc = cfg.scaled_encoder_maps()
        dec = cfg.scaled_decoder_maps()
        c_in = 1
        for i, c_out in enumerate(enc, start=1):
            self._new(f"enc{i}.w", rng.normal(0.0, _he_std(c_in * k), (c_out, c_in, k)).astype(dtype))
            self._new(f"enc{i}.b", np.zeros(c_out, dtype=dtype))
            self._new(f"enc{i}.alpha", np.full(c_out, _PRELU_INIT, dtype=dtype))
            c_in = c_out
        for i in range(1, cfg.depth):
            self._new(f"skip{i}.gain", np.ones(enc[i - 1], dtype=dtype))
        c_in = 2 * enc[-1]  # latent noise doubles the bottleneck channels
        for j, c_out in enumerate(dec, start=1):
            # a stride-s transposed conv hits each output sample with
            # k/s taps, not k
            fan_in = max(1, c_in * k // cfg.stride)
            self._new(f"dec{j}.w", rng.normal(0.0, _he_std(fan_in), (c_in, c_out, k)).astype(dtype))
            self._new(f"dec{j}.b", np.zeros(c_out, dtype=dtype))
            if j < cfg.depth:
                self._new(f"dec{j}.alpha", np.full(c_out, _PRELU_INIT, dtype=dtype))
            c_in = c_out

    def sample_latent(self, rng: np.random.Generator, batch: int, length: int) -> Tensor:
        c, t = self.cfg.bottleneck_shape(length)
        return Tensor(rng.standard_normal((batch, c, t)).astype(self.dtype))

    def forward(self, x: Tensor, z: Tensor) -> Tensor:
        cfg = self.cfg
        if x.ndim != 3 or x.shape[1] != 1:
            raise ShapeError(f"generator input must be (B, 1, L), got {x.shape}")
        length = x.shape[2]
        if length % cfg.block != 0:
            raise ShapeError(f"input length {length} not divisible by {cfg.block}")
        c_bot, t_bot = cfg.bottleneck_shape(length)
        if z.shape != (x.shape[0], c_bot, t_bot):
            raise ShapeError(f"latent shape {z.shape} != {(x.shape[0], c_bot, t_bot)}")
        h = x
        skips = []
        for i in range(1, cfg.depth + 1):
            h = ops.conv1d(h, self.param(f"enc{i}.w").tensor,
                           self.param(f"enc{i}.b").tensor, cfg.stride)
            h = ops.prelu(h, self.param(f"enc{i}.alpha").tensor)
            if i < cfg.depth:
                skips.append(h)
        h = ops.concat_channels(h, z)
        for j in range(1, cfg.depth + 1):
            h = ops.conv1d_transposed(h, self.param(f"dec{j}.w").tensor,
                                      self.param(f"dec{j}.b").tensor, cfg.stride)
            if j < cfg.depth:
                h = ops.prelu(h, self.param(f"dec{j}.alpha").tensor)
                skip_i = cfg.depth - j
                scaled = ops.channel_scale(skips[skip_i - 1],
                                           self.param(f"skip{skip_i}.gain").tensor)
                h = ops.add(h, scaled)
            else:
                h = ops.tanh(h)
        return h


class Discriminator(_ParamStore):
    def __init__(self, cfg: DiscriminatorConfig, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        k = cfg.kernel_width
        maps = cfg.scaled_conv_maps()
        sn_params = []
        c_in = 2
        for i, c_out in enumerate(maps, start=1):
            w = self._new(f"conv{i}.w", rng.normal(0.0, _he_std(c_in * k), (c_out, c_in, k)).astype(dtype))
            sn_params.append(w)
            self._new(f"conv{i}.b", np.zeros(c_out, dtype=dtype))
            self._new(f"conv{i}.alpha", np.full(c_out, _PRELU_INIT, dtype=dtype))
            c_in = c_out
        hidden = cfg.scaled_mlp_hidden()
        w = self._new("mlp1.w", rng.normal(0.0, _he_std(cfg.trunk_features()), (hidden, cfg.trunk_features())).astype(dtype))
        sn_params.append(w)
        self._new("mlp1.b", np.zeros(hidden, dtype=dtype))
        self._new("mlp1.alpha", np.full(hidden, _PRELU_INIT, dtype=dtype))
        w = self._new("mlp2.w", rng.normal(0.0, _he_std(hidden), (1, hidden)).astype(dtype))
        sn_params.append(w)
        self._new("mlp2.b", np.zeros(1, dtype=dtype))
        branch_in = maps[cfg.acoustic_branch_layer - 1]
        a_hidden = cfg.scaled_acoustic_hidden()
        w = self._new("aco1.w", rng.normal(0.0, _he_std(branch_in), (a_hidden, branch_in)).astype(dtype))
        sn_params.append(w)
        self._new("aco1.b", np.zeros(a_hidden, dtype=dtype))
        self._new("aco1.alpha", np.full(a_hidden, _PRELU_INIT, dtype=dtype))
        w = self._new("aco2.w", rng.normal(0.0, _he_std(a_hidden), (cfg.acoustic_out, a_hidden)).astype(dtype))
        sn_params.append(w)
        self._new("aco2.b", np.zeros(cfg.acoustic_out, dtype=dtype))
        self._sn_params = sn_params
        for p in sn_params:
            ops.init_spectral(p, rng)
            ops.update_spectral(p)

    def spectral_params(self) -> list[Parameter]:
        return list(self._sn_params)

    def update_spectral(self, iterations: int = 1) -> None:
        """One power-iteration refresh on every normalized weight."""
        for p in self._sn_params:
            ops.update_spectral(p, iterations)

    def _trunk(self, signal: Tensor, condition: Tensor,
               shuffle_rng: np.random.Generator | None):
        cfg = self.cfg
        if signal.shape != condition.shape:
            raise ShapeError(f"signal {signal.shape} vs condition {condition.shape}")
        if signal.ndim != 3 or signal.shape[1] != 1:
            raise ShapeError(f"discriminator inputs must be (B, 1, L), got {signal.shape}")
        if signal.shape[2] != cfg.input_length:
            raise ShapeError(f"input length {signal.shape[2]} != configured {cfg.input_length}")
        h = ops.concat_channels(signal, condition)
        tap = None
        for i in range(1, cfg.depth + 1):
            w = ops.spectral_weight(self.param(f"conv{i}.w"))
            h = ops.conv1d(h, w, self.param(f"conv{i}.b").tensor, cfg.stride)
            h = ops.prelu(h, self.param(f"conv{i}.alpha").tensor)
            if i == cfg.acoustic_branch_layer:
                tap = h  # branch reads aligned frames, before the shuffle
            if shuffle_rng is not None:
                h = ops.phase_shuffle(h, cfg.shuffle_n, shuffle_rng)
        flat = ops.reshape(h, (h.shape[0], -1))
        w = ops.spectral_weight(self.param("mlp1.w"))
        s = ops.prelu(ops.linear(flat, w, self.param("mlp1.b").tensor),
                      self.param("mlp1.alpha").tensor, axis=-1)
        w = ops.spectral_weight(self.param("mlp2.w"))
        score = ops.linear(s, w, self.param("mlp2.b").tensor)
        return score, tap

    def acoustic_head(self, tap: Tensor) -> Tensor:
        """(B, C, T) branch activations -> (B, T, acoustic_out) predictions."""
        frames = ops.transpose_12(tap)
        w = ops.spectral_weight(self.param("aco1.w"))
        h = ops.prelu(ops.linear(frames, w, self.param("aco1.b").tensor),
                      self.param("aco1.alpha").tensor, axis=-1)
        w = ops.spectral_weight(self.param("aco2.w"))
        return ops.linear(h, w, self.param("aco2.b").tensor)

    def forward(self, signal: Tensor, condition: Tensor,
                shuffle_rng: np.random.Generator | None = None,
                want_acoustic: bool = True,
                acoustic_rows: tuple | None = None) -> DiscriminatorOutput:
        """Score a (signal, condition) pair batch.

        acoustic_rows limits the regression branch to a row range of
        the batch (the trainer concatenates real/fake/unaligned pairs
        and only regresses the leading real rows).
        """
        score, tap = self._trunk(signal, condition, shuffle_rng)
        if not want_acoustic:
            return DiscriminatorOutput(score=score)
        if acoustic_rows is not None:
            tap = ops.slice_rows(tap, acoustic_rows[0], acoustic_rows[1])
        return DiscriminatorOutput(score=score, acoustic_pred=self.acoustic_head(tap))


def build_generator(cfg: GeneratorConfig, rng: np.random.Generator,
                    dtype=np.float32) -> Generator:
    return Generator(cfg, rng, dtype=dtype)


def build_discriminator(cfg: DiscriminatorConfig, rng: np.random.Generator,
                        dtype=np.float32) -> Discriminator:
    return Discriminator(cfg, rng, dtype=dtype)
