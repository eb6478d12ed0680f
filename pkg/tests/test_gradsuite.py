"""Gradient verification suite: case coverage and report aggregation."""

from gsegan.gradsuite import model_cases, op_cases, run_suite

import numpy as np


def test_suite_covers_every_differentiable_op():
    rng = np.random.default_rng(0)
    names = {name for name, _, _ in op_cases(rng)}
    expected = {
        "add", "sub", "mul", "scale", "square", "sum_all", "mean_all",
        "tanh", "prelu_channel", "prelu_last", "reshape", "transpose_12",
        "concat_channels", "slice_rows", "channel_scale", "linear",
        "conv1d_s1", "conv1d_s4", "conv1d_transposed_s1",
        "conv1d_transposed_s4", "phase_shuffle", "stft_db", "mse_const",
        "masked_sse", "spectral_weight",
    }
    assert names == expected


def test_suite_includes_both_models():
    rng = np.random.default_rng(0)
    names = [name for name, _, _ in model_cases(rng, 1 / 16)]
    assert names == ["generator", "discriminator"]


def test_small_suite_passes_and_reports():
    report = run_suite(seeds=(0, 1), op_coords=4, model_coords=2)
    assert report.passed
    assert report.max_rel_err < 1e-5
    worst = report.worst()
    assert worst.name in {r.name for r in report.results}
    table = report.table()
    assert "generator" in table and "stft_db" in table


def test_suite_is_deterministic():
    a = run_suite(seeds=(3,), op_coords=3, model_coords=2)
    b = run_suite(seeds=(3,), op_coords=3, model_coords=2)
    assert a.max_rel_err == b.max_rel_err
    assert a.worst().name == b.worst().name
