import os
import subprocess
import sys

import numpy as np
import pytest

from stga.nn import kernels as K

pytestmark = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


def _lstm_inputs(rng, rows=7, hidden=5):
    z = rng.normal(scale=3.0, size=(rows, 4 * hidden))
    c = rng.normal(size=(rows, hidden))
    return z, c


def test_lstm_forward_paths_agree(rng):
    z, c = _lstm_inputs(rng)
    for a, b in zip(K.np_lstm_forward(z, c), K.nb_lstm_forward(z, c)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


def test_lstm_backward_paths_agree(rng):
    z, c = _lstm_inputs(rng)
    h, c_new, gates, tc = K.np_lstm_forward(z, c)
    dh, dc = rng.normal(size=h.shape), rng.normal(size=h.shape)
    for a, b in zip(K.np_lstm_backward(dh, dc, c, gates, tc), K.nb_lstm_backward(dh, dc, c, gates, tc)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


def test_sigmoid_extremes_are_finite():
    z = np.array([[-800.0, 800.0, 0.0, -800.0]])
    c = np.zeros((1, 1))
    for impl in (K.np_lstm_forward, K.nb_lstm_forward):
        h, c_new, gates, _ = impl(z, c)
        assert np.all(np.isfinite(gates))
        np.testing.assert_allclose(gates[0], [0.0, 1.0, 0.0, 0.0], atol=1e-300)


def test_softmax_paths_agree(rng):
    x = rng.normal(scale=10, size=(6, 9))
    y_np, y_nb = K.np_softmax_rows(x), K.nb_softmax_rows(x)
    np.testing.assert_allclose(y_np, y_nb, rtol=1e-14, atol=0)
    dy = rng.normal(size=x.shape)
    np.testing.assert_allclose(K.np_softmax_rows_backward(y_np, dy),
                               K.nb_softmax_rows_backward(y_np, dy), atol=1e-15)


def test_segment_sum_paths_agree(rng):
    x = rng.normal(size=(20, 3))
    seg = rng.integers(0, 6, size=20)
    expected = np.zeros((6, 3))
    for r in range(20):
        expected[seg[r]] += x[r]
    np.testing.assert_allclose(K.np_segment_sum(x, seg, 6), expected, atol=1e-15)
    np.testing.assert_allclose(K.nb_segment_sum(x, seg, 6), expected, atol=1e-15)


def test_bvn_paths_agree(rng):
    n = 11
    mu, tgt = rng.uniform(size=(n, 2)), rng.uniform(size=(n, 2))
    sig = rng.uniform(0.05, 2.0, size=(n, 2))
    rho = rng.uniform(-0.95, 0.95, size=n)
    g = rng.normal(size=n)
    np.testing.assert_allclose(K.np_bvn_nll(mu, sig, rho, tgt), K.nb_bvn_nll(mu, sig, rho, tgt), rtol=1e-13)
    for a, b in zip(K.np_bvn_nll_backward(mu, sig, rho, tgt, g), K.nb_bvn_nll_backward(mu, sig, rho, tgt, g)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("0", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, STGA_DISABLE_NUMBA=flag)
    code = ("from stga.nn import kernels as K; "
            "print(K.backend(), K.lstm_backward is K.nb_lstm_backward, K.lstm_forward is K.np_lstm_forward)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    name, backward_nb, forward_np = out.stdout.split()
    assert name == expected
    assert backward_nb == str(expected == "numba")
    assert forward_np == "True"


def test_training_loss_matches_across_backends():
    code = ("from stga import *; from stga.model import sequence_nll;"
            "d = make_synthetic('crossing', 3, seed=2); c = ModelConfig(hidden=6, embed=3);"
            "print(repr(float(sequence_nll(d.instances[0], ModelParams.init(c, 1), c).value)))")
    vals = []
    for flag in ("0", "1"):
        env = dict(os.environ, STGA_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        vals.append(float(out.stdout))
    assert vals[0] == pytest.approx(vals[1], rel=1e-12)
