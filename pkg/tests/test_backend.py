"""Conv backend: the compiled extension against the numpy fallback."""

import os
import subprocess
import sys

import numpy as np
import pytest

from gsegan.nn import backend

compiled = pytest.importorskip("gsegan.nn._convcore",
                               reason="compiled extension not built")

GEOMS = [
    # (batch, c_in, length, c_out, kernel, stride)
    (2, 3, 20, 4, 5, 1),
    (2, 3, 20, 4, 5, 4),
    (1, 1, 7, 2, 31, 4),
    (3, 8, 64, 16, 31, 4),
    (2, 4, 16, 3, 3, 2),
]


def _pad(x, kernel, stride):
    n_out, pl, pr = backend.conv_geometry(x.shape[2], kernel, stride)
    return np.pad(x, ((0, 0), (0, 0), (pl, pr))), n_out


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("geom", GEOMS)
def test_im2col_matches_numpy_exactly(geom, dtype):
    b, ci, length, _, k, s = geom
    rng = np.random.default_rng(0)
    x = rng.standard_normal((b, ci, length)).astype(dtype)
    xp, n_out = _pad(x, k, s)
    ours = compiled.im2col(np.ascontiguousarray(xp), k, s, n_out)
    ref = backend._im2col_np(xp, k, s, n_out)
    assert ours.dtype == ref.dtype == dtype
    np.testing.assert_array_equal(ours, ref)  # pure gather, no arithmetic


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("geom", GEOMS)
def test_col2im_matches_numpy(geom, dtype):
    b, ci, length, _, k, s = geom
    rng = np.random.default_rng(1)
    n_out, pl, pr = backend.conv_geometry(length, k, s)
    lp = length + pl + pr
    dcols = rng.standard_normal((b * n_out, ci * k)).astype(dtype)
    ours = compiled.col2im(np.ascontiguousarray(dcols), b, ci, lp, k, s, n_out)
    ref = backend._col2im_np(dcols, b, ci, lp, k, s, n_out)
    assert ours.dtype == ref.dtype == dtype
    # overlapping patches accumulate in a different order, so sums of up
    # to `kernel` terms may differ by a few ulp of the accumulated scale
    atol = k * np.finfo(dtype).eps * max(1.0, float(np.abs(ref).max()))
    np.testing.assert_allclose(ours, ref, rtol=0, atol=atol)


@pytest.mark.parametrize("geom", GEOMS)
def test_col2im_is_the_adjoint_of_im2col(geom):
    b, ci, length, _, k, s = geom
    rng = np.random.default_rng(2)
    x = rng.standard_normal((b, ci, length))
    xp, n_out = _pad(x, k, s)
    lp = xp.shape[2]
    m = rng.standard_normal((b * n_out, ci * k))
    lhs = float(np.sum(compiled.im2col(np.ascontiguousarray(xp), k, s, n_out) * m))
    rhs = float(np.sum(xp * compiled.col2im(np.ascontiguousarray(m),
                                            b, ci, lp, k, s, n_out)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("geom", GEOMS)
def test_conv_ops_agree_across_backends(geom, monkeypatch):
    b, ci, length, co, k, s = geom
    rng = np.random.default_rng(3)
    x = rng.standard_normal((b, ci, length))
    w = rng.standard_normal((co, ci, k))
    n_out = -(-length // s)
    dy = rng.standard_normal((b, co, n_out))

    y_c, xp_c = backend.conv_forward(x, w, s)
    dx_c = backend.conv_backward_input(dy, w, s, length)
    dw_c = backend.conv_backward_weight(dy, xp_c, s, k)

    monkeypatch.setattr(backend, "_core", None)
    y_n, xp_n = backend.conv_forward(x, w, s)
    dx_n = backend.conv_backward_input(dy, w, s, length)
    dw_n = backend.conv_backward_weight(dy, xp_n, s, k)

    np.testing.assert_array_equal(xp_c, xp_n)
    np.testing.assert_allclose(y_c, y_n, rtol=1e-12, atol=0)
    np.testing.assert_allclose(dx_c, dx_n, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(dw_c, dw_n, rtol=1e-12, atol=0)


def test_geometry_guard_rejects_overrun():
    xp = np.zeros((1, 1, 10))
    with pytest.raises(ValueError):
        compiled.im2col(xp, kernel=8, stride=4, n_out=3)
    with pytest.raises(ValueError):
        compiled.col2im(np.zeros((3, 8)), 1, 1, 10, 8, 4, 3)
    with pytest.raises(ValueError):
        compiled.col2im(np.zeros((2, 8)), 1, 1, 12, 8, 4, 3)


def _backend_in_subprocess(env_value):
    env = dict(os.environ)
    if env_value is None:
        env.pop("GSEGAN_BACKEND", None)
    else:
        env["GSEGAN_BACKEND"] = env_value
    return subprocess.run(
        [sys.executable, "-c",
         "from gsegan.nn import backend; print(backend.BACKEND)"],
        capture_output=True, text=True, env=env)


def test_env_var_forces_numpy_backend():
    proc = _backend_in_subprocess("numpy")
    assert proc.returncode == 0 and proc.stdout.strip() == "numpy"


def test_env_var_forces_compiled_backend():
    proc = _backend_in_subprocess("compiled")
    assert proc.returncode == 0 and proc.stdout.strip() == "compiled"


def test_env_var_rejects_unknown_backend():
    proc = _backend_in_subprocess("cuda")
    assert proc.returncode != 0
    assert "GSEGAN_BACKEND" in proc.stderr
