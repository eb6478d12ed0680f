"""Model architecture: shape laws, parameter accounting, determinism,
and gradient flow through both networks."""

import numpy as np
import pytest

from gsegan import features
from gsegan.errors import ConfigError, ShapeError
from gsegan.nn import Adam, Tensor, ops
from gsegan.segan import (DiscriminatorConfig, GeneratorConfig,
                          build_discriminator, build_generator, scaled_width)

SMALL = 1.0 / 16.0


def small_generator(seed=0, dtype=np.float64):
    return build_generator(GeneratorConfig(width_scale=SMALL),
                           np.random.default_rng(seed), dtype=dtype)


def small_discriminator(seed=0, length=1024, dtype=np.float64):
    cfg = DiscriminatorConfig(width_scale=SMALL, input_length=length)
    return build_discriminator(cfg, np.random.default_rng(seed), dtype=dtype)


def generator_param_count(cfg: GeneratorConfig) -> int:
    enc = cfg.scaled_encoder_maps()
    dec = cfg.scaled_decoder_maps()
    k = cfg.kernel_width
    total = 0
    c_in = 1
    for c in enc:
        total += c * c_in * k + 2 * c  # weight + bias + prelu slope
        c_in = c
    total += sum(enc[:-1])  # skip gains
    c_in = 2 * enc[-1]
    for j, c in enumerate(dec, start=1):
        total += c_in * c * k + c
        if j < cfg.depth:
            total += c
        c_in = c
    return total


def discriminator_param_count(cfg: DiscriminatorConfig) -> int:
    maps = cfg.scaled_conv_maps()
    k = cfg.kernel_width
    total = 0
    c_in = 2
    for c in maps:
        total += c * c_in * k + 2 * c
        c_in = c
    hidden = cfg.scaled_mlp_hidden()
    total += hidden * cfg.trunk_features() + 2 * hidden
    total += 1 * hidden + 1
    a_hidden = cfg.scaled_acoustic_hidden()
    branch_in = maps[cfg.acoustic_branch_layer - 1]
    total += a_hidden * branch_in + 2 * a_hidden
    total += cfg.acoustic_out * a_hidden + cfg.acoustic_out
    return total


# ------------------------------------------------------------------- configs

def test_width_scaling_floors_at_one():
    assert scaled_width(64, 1 / 16) == 4
    assert scaled_width(1, 1 / 16) == 1
    assert scaled_width(1024, 1.0) == 1024


def test_generator_config_validation():
    with pytest.raises(ConfigError):
        GeneratorConfig(encoder_maps=(64, 128), decoder_maps=(64,))
    with pytest.raises(ConfigError):
        GeneratorConfig(decoder_maps=(512, 256, 128, 64, 2))
    with pytest.raises(ConfigError):
        GeneratorConfig(width_scale=0)


def test_discriminator_config_validation():
    with pytest.raises(ConfigError):
        DiscriminatorConfig(acoustic_branch_layer=6)
    with pytest.raises(ConfigError):
        DiscriminatorConfig(input_length=16000)


def test_full_scale_dimensions():
    g = GeneratorConfig()
    d = DiscriminatorConfig()
    assert g.bottleneck_shape(16384) == (1024, 16)
    assert d.trunk_features() == 16384
    assert d.acoustic_out == 277


def test_parameter_count_matches_closed_form():
    for scale in (1 / 16, 1 / 8):
        gcfg = GeneratorConfig(width_scale=scale)
        dcfg = DiscriminatorConfig(width_scale=scale, input_length=1024)
        g = build_generator(gcfg, np.random.default_rng(0))
        d = build_discriminator(dcfg, np.random.default_rng(0))
        assert g.n_parameters() == generator_param_count(gcfg)
        assert d.n_parameters() == discriminator_param_count(dcfg)


# --------------------------------------------------------------- generator

def test_generator_shape_law():
    g = small_generator()
    for length in (1024, 4096):
        x = Tensor(np.zeros((2, 1, length)))
        z = g.sample_latent(np.random.default_rng(1), 2, length)
        y = g.forward(x, z)
        assert y.shape == (2, 1, length)


def test_generator_output_strictly_inside_unit_interval():
    g = small_generator(seed=3)
    rng = np.random.default_rng(4)
    x = Tensor(rng.uniform(-1, 1, (2, 1, 1024)))
    y = g.forward(x, g.sample_latent(rng, 2, 1024))
    assert np.all(y.data > -1.0)
    assert np.all(y.data < 1.0)


def test_generator_rejects_bad_lengths():
    g = small_generator()
    x = Tensor(np.zeros((1, 1, 1000)))
    with pytest.raises(ShapeError):
        g.forward(x, Tensor(np.zeros((1, 64, 1))))


def test_generator_rejects_bad_latent_shape():
    g = small_generator()
    x = Tensor(np.zeros((1, 1, 1024)))
    with pytest.raises(ShapeError):
        g.forward(x, Tensor(np.zeros((1, 3, 1))))


def test_generator_latent_shape_matches_bottleneck():
    g = small_generator()
    z = g.sample_latent(np.random.default_rng(0), 3, 2048)
    assert z.shape == (3, g.cfg.scaled_encoder_maps()[-1], 2)


def test_generator_pinned_latent_is_deterministic():
    g = small_generator(seed=5)
    rng = np.random.default_rng(6)
    x = Tensor(rng.uniform(-0.5, 0.5, (1, 1, 1024)))
    z = g.sample_latent(np.random.default_rng(7), 1, 1024)
    y1 = g.forward(x, z)
    y2 = g.forward(x, z)
    assert np.array_equal(y1.data, y2.data)


def test_generator_latent_changes_output():
    g = small_generator(seed=8)
    rng = np.random.default_rng(9)
    x = Tensor(rng.uniform(-0.5, 0.5, (1, 1, 1024)))
    y1 = g.forward(x, g.sample_latent(np.random.default_rng(10), 1, 1024))
    y2 = g.forward(x, g.sample_latent(np.random.default_rng(11), 1, 1024))
    assert np.mean(np.abs(y1.data - y2.data)) > 0


def test_same_seed_builds_identical_models():
    g1 = small_generator(seed=12)
    g2 = small_generator(seed=12)
    for p1, p2 in zip(g1.parameters(), g2.parameters()):
        assert p1.name == p2.name
        assert np.array_equal(p1.data, p2.data)


def test_generator_init_values():
    g = small_generator()
    assert np.all(g.param("enc1.alpha").data == 0.25)
    assert np.all(g.param("skip1.gain").data == 1.0)
    assert np.all(g.param("enc1.b").data == 0.0)
    # weight std follows fan-in scaling: sqrt(2/(c_in*k)) for strided
    # convs, sqrt(2/(c_in*k/stride)) for transposed ones
    k = g.cfg.kernel_width
    enc1 = g.param("enc1.w").data
    assert abs(enc1.std() - np.sqrt(2.0 / k)) < 0.15 * np.sqrt(2.0 / k)
    dec1 = g.param("dec1.w").data
    expected = np.sqrt(2.0 / (dec1.shape[0] * k // g.cfg.stride))
    assert abs(dec1.std() - expected) < 0.05 * expected


# ------------------------------------------------------------ discriminator

def test_discriminator_output_shapes():
    d = small_discriminator()
    x = Tensor(np.zeros((3, 1, 1024)))
    out = d.forward(x, x)
    assert out.score.shape == (3, 1)
    assert out.acoustic_pred.shape == (3, 4, 277)


def test_discriminator_frame_count_matches_features():
    d = small_discriminator(length=2048)
    x = Tensor(np.zeros((1, 1, 2048)))
    out = d.forward(x, x)
    theta = features.extract_acoustic_features(np.zeros(2048))
    assert out.acoustic_pred.shape[1] == theta.data.shape[0]


def test_discriminator_acoustic_row_slice():
    d = small_discriminator()
    rng = np.random.default_rng(13)
    x = Tensor(rng.uniform(-0.5, 0.5, (4, 1, 1024)))
    out = d.forward(x, x, acoustic_rows=(0, 2))
    assert out.acoustic_pred.shape == (2, 4, 277)
    assert out.score.shape == (4, 1)


def test_discriminator_without_acoustic_branch():
    d = small_discriminator()
    x = Tensor(np.zeros((2, 1, 1024)))
    out = d.forward(x, x, want_acoustic=False)
    assert out.acoustic_pred is None


def test_discriminator_rejects_mismatched_pairs():
    d = small_discriminator()
    with pytest.raises(ShapeError):
        d.forward(Tensor(np.zeros((1, 1, 1024))), Tensor(np.zeros((2, 1, 1024))))
    with pytest.raises(ShapeError):
        d.forward(Tensor(np.zeros((1, 1, 2048))), Tensor(np.zeros((1, 1, 2048))))


@pytest.mark.parametrize("seed", range(20))
def test_discriminator_is_asymmetric_in_channels(seed):
    d = small_discriminator(seed=seed)
    rng = np.random.default_rng(100 + seed)
    a = Tensor(rng.uniform(-0.5, 0.5, (1, 1, 1024)))
    b = Tensor(rng.uniform(-0.5, 0.5, (1, 1, 1024)))
    s_ab = d.forward(a, b, want_acoustic=False).score.item()
    s_ba = d.forward(b, a, want_acoustic=False).score.item()
    assert abs(s_ab - s_ba) > 0


def test_discriminator_phase_shuffle_changes_activations():
    d = small_discriminator(seed=14)
    rng = np.random.default_rng(15)
    x = Tensor(rng.uniform(-0.5, 0.5, (2, 1, 1024)))
    s_plain = d.forward(x, x, want_acoustic=False).score.data
    s_shuf = d.forward(x, x, shuffle_rng=np.random.default_rng(16),
                       want_acoustic=False).score.data
    assert not np.array_equal(s_plain, s_shuf)


def test_all_discriminator_weights_are_spectrally_normalized():
    d = small_discriminator()
    weight_names = {p.name for p in d.spectral_params()}
    expected = {f"conv{i}.w" for i in range(1, 6)}
    expected |= {"mlp1.w", "mlp2.w", "aco1.w", "aco2.w"}
    assert weight_names == expected
    for p in d.spectral_params():
        assert p.spectral_u is not None
        assert abs(np.linalg.norm(p.spectral_u) - 1.0) < 1e-5


# ------------------------------------------------------------ gradient flow

def test_generator_parameters_all_update():
    g = small_generator(seed=17)
    rng = np.random.default_rng(18)
    x = Tensor(rng.uniform(-0.5, 0.5, (2, 1, 1024)))
    z = g.sample_latent(rng, 2, 1024)
    loss = ops.mean_all(ops.square(g.forward(x, z)))
    loss.backward()
    before = {p.name: p.data.copy() for p in g.parameters()}
    opt = Adam(g.parameters(), lr=1e-3)
    opt.step()
    for p in g.parameters():
        assert p.grad is not None, p.name
        if np.any(p.grad != 0):
            assert not np.array_equal(p.data, before[p.name]), p.name


def test_acoustic_branch_gradients_reach_generator():
    g = small_generator(seed=19)
    d = small_discriminator(seed=20)
    rng = np.random.default_rng(21)
    cond = Tensor(rng.uniform(-0.5, 0.5, (2, 1, 1024)))
    fake = g.forward(cond, g.sample_latent(rng, 2, 1024))
    out = d.forward(fake, cond)
    loss = ops.mean_all(ops.square(out.acoustic_pred))
    loss.backward()
    assert g.param("enc1.w").grad is not None
    assert np.any(g.param("enc1.w").grad != 0)
    assert g.param("dec5.w").grad is not None


def test_discriminator_branch_isolated_from_score_path():
    d = small_discriminator(seed=22)
    rng = np.random.default_rng(23)
    x = Tensor(rng.uniform(-0.5, 0.5, (2, 1, 1024)))
    out = d.forward(x, x, want_acoustic=False)
    ops.mean_all(ops.square(out.score)).backward()
    assert d.param("aco1.w").grad is None
    assert d.param("conv1.w").grad is not None


def test_state_dict_roundtrip_reproduces_forward():
    d1 = small_discriminator(seed=24)
    d2 = small_discriminator(seed=25)
    rng = np.random.default_rng(26)
    x = Tensor(rng.uniform(-0.5, 0.5, (1, 1, 1024)))
    d2.load_state_dict(d1.state_dict())
    s1 = d1.forward(x, x).score.data
    s2 = d2.forward(x, x).score.data
    assert np.array_equal(s1, s2)


def test_load_state_dict_rejects_unknown_keys():
    d = small_discriminator()
    state = d.state_dict()
    state["bogus"] = np.zeros(3)
    with pytest.raises(ShapeError):
        d.load_state_dict(state)
