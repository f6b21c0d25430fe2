"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Every kernel exists twice: ``np_<name>`` (vectorised numpy) and ``nb_<name>``
(``@njit`` loops).  The exported ``<name>`` binds to the numba version unless
numba is missing or ``STGA_DISABLE_NUMBA`` is set to a truthy value before
import.  Both paths agree to rounding; tests compare them directly.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("STGA_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag in ("", "0", "false", "no")

LOG_2PI = math.log(2.0 * math.pi)


def _optional_njit(func):
    if HAVE_NUMBA:
        return njit(cache=True, fastmath=False)(func)
    return func


# ---------------------------------------------------------------------------
# LSTM pointwise block.  Gate layout in z is (input, forget, candidate, output).
# ---------------------------------------------------------------------------


def _np_sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def np_lstm_forward(z, c_prev):
    n_hidden = c_prev.shape[1]
    i = _np_sigmoid(z[:, :n_hidden])
    f = _np_sigmoid(z[:, n_hidden:2 * n_hidden])
    g = np.tanh(z[:, 2 * n_hidden:3 * n_hidden])
    o = _np_sigmoid(z[:, 3 * n_hidden:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    gates = np.concatenate([i, f, g, o], axis=1)
    return h, c, gates, tc


def np_lstm_backward(dh, dc, c_prev, gates, tc):
    n_hidden = c_prev.shape[1]
    i = gates[:, :n_hidden]
    f = gates[:, n_hidden:2 * n_hidden]
    g = gates[:, 2 * n_hidden:3 * n_hidden]
    o = gates[:, 3 * n_hidden:]
    dc_total = dc + dh * o * (1.0 - tc * tc)
    dz = np.empty_like(gates)
    dz[:, :n_hidden] = dc_total * g * i * (1.0 - i)
    dz[:, n_hidden:2 * n_hidden] = dc_total * c_prev * f * (1.0 - f)
    dz[:, 2 * n_hidden:3 * n_hidden] = dc_total * i * (1.0 - g * g)
    dz[:, 3 * n_hidden:] = dh * tc * o * (1.0 - o)
    dc_prev = dc_total * f
    return dz, dc_prev


@_optional_njit
def _sigmoid_scalar(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@_optional_njit
def nb_lstm_forward(z, c_prev):
    n_rows, n_hidden = c_prev.shape
    h = np.empty((n_rows, n_hidden))
    c = np.empty((n_rows, n_hidden))
    tc = np.empty((n_rows, n_hidden))
    gates = np.empty((n_rows, 4 * n_hidden))
    for r in range(n_rows):
        for k in range(n_hidden):
            i = _sigmoid_scalar(z[r, k])
            f = _sigmoid_scalar(z[r, n_hidden + k])
            g = math.tanh(z[r, 2 * n_hidden + k])
            o = _sigmoid_scalar(z[r, 3 * n_hidden + k])
            cc = f * c_prev[r, k] + i * g
            t = math.tanh(cc)
            gates[r, k] = i
            gates[r, n_hidden + k] = f
            gates[r, 2 * n_hidden + k] = g
            gates[r, 3 * n_hidden + k] = o
            c[r, k] = cc
            tc[r, k] = t
            h[r, k] = o * t
    return h, c, gates, tc


@_optional_njit
def nb_lstm_backward(dh, dc, c_prev, gates, tc):
    n_rows, n_hidden = c_prev.shape
    dz = np.empty((n_rows, 4 * n_hidden))
    dc_prev = np.empty((n_rows, n_hidden))
    for r in range(n_rows):
        for k in range(n_hidden):
            i = gates[r, k]
            f = gates[r, n_hidden + k]
            g = gates[r, 2 * n_hidden + k]
            o = gates[r, 3 * n_hidden + k]
            t = tc[r, k]
            dct = dc[r, k] + dh[r, k] * o * (1.0 - t * t)
            dz[r, k] = dct * g * i * (1.0 - i)
            dz[r, n_hidden + k] = dct * c_prev[r, k] * f * (1.0 - f)
            dz[r, 2 * n_hidden + k] = dct * i * (1.0 - g * g)
            dz[r, 3 * n_hidden + k] = dh[r, k] * t * o * (1.0 - o)
            dc_prev[r, k] = dct * f
    return dz, dc_prev


# ---------------------------------------------------------------------------
# Row softmax
# ---------------------------------------------------------------------------


def np_softmax_rows(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def np_softmax_rows_backward(y, dy):
    inner = (dy * y).sum(axis=-1, keepdims=True)
    return y * (dy - inner)


@_optional_njit
def nb_softmax_rows(x):
    n_rows, n_cols = x.shape
    out = np.empty((n_rows, n_cols))
    for r in range(n_rows):
        m = x[r, 0]
        for k in range(1, n_cols):
            if x[r, k] > m:
                m = x[r, k]
        s = 0.0
        for k in range(n_cols):
            e = math.exp(x[r, k] - m)
            out[r, k] = e
            s += e
        for k in range(n_cols):
            out[r, k] /= s
    return out


@_optional_njit
def nb_softmax_rows_backward(y, dy):
    n_rows, n_cols = y.shape
    out = np.empty((n_rows, n_cols))
    for r in range(n_rows):
        inner = 0.0
        for k in range(n_cols):
            inner += dy[r, k] * y[r, k]
        for k in range(n_cols):
            out[r, k] = y[r, k] * (dy[r, k] - inner)
    return out


# ---------------------------------------------------------------------------
# Segment sum: out[seg[r]] += x[r], accumulated in row order.
# ---------------------------------------------------------------------------


def np_segment_sum(x, seg, n_segments):
    out = np.zeros((n_segments, x.shape[1]))
    np.add.at(out, seg, x)
    return out


@_optional_njit
def nb_segment_sum(x, seg, n_segments):
    n_rows, n_cols = x.shape
    out = np.zeros((n_segments, n_cols))
    for r in range(n_rows):
        s = seg[r]
        for k in range(n_cols):
            out[s, k] += x[r, k]
    return out


# ---------------------------------------------------------------------------
# Bivariate normal negative log-likelihood, one row per (mu, sigma, rho, target).
# ---------------------------------------------------------------------------


def np_bvn_nll(mu, sigma, rho, target):
    zx = (target[:, 0] - mu[:, 0]) / sigma[:, 0]
    zy = (target[:, 1] - mu[:, 1]) / sigma[:, 1]
    one_m = 1.0 - rho * rho
    quad = (zx * zx - 2.0 * rho * zx * zy + zy * zy) / one_m
    return (LOG_2PI + np.log(sigma[:, 0]) + np.log(sigma[:, 1])
            + 0.5 * np.log(one_m) + 0.5 * quad)


def np_bvn_nll_backward(mu, sigma, rho, target, g):
    sx = sigma[:, 0]
    sy = sigma[:, 1]
    zx = (target[:, 0] - mu[:, 0]) / sx
    zy = (target[:, 1] - mu[:, 1]) / sy
    one_m = 1.0 - rho * rho
    quad = (zx * zx - 2.0 * rho * zx * zy + zy * zy) / one_m
    dq_dzx = (2.0 * zx - 2.0 * rho * zy) / one_m
    dq_dzy = (2.0 * zy - 2.0 * rho * zx) / one_m
    dmu = np.empty_like(mu)
    dmu[:, 0] = g * (-0.5 * dq_dzx / sx)
    dmu[:, 1] = g * (-0.5 * dq_dzy / sy)
    dsig = np.empty_like(sigma)
    dsig[:, 0] = g * (1.0 / sx - 0.5 * dq_dzx * zx / sx)
    dsig[:, 1] = g * (1.0 / sy - 0.5 * dq_dzy * zy / sy)
    drho = g * (-rho / one_m + 0.5 * (-2.0 * zx * zy + 2.0 * rho * quad) / one_m)
    return dmu, dsig, drho


@_optional_njit
def nb_bvn_nll(mu, sigma, rho, target):
    n = mu.shape[0]
    out = np.empty(n)
    for r in range(n):
        sx = sigma[r, 0]
        sy = sigma[r, 1]
        zx = (target[r, 0] - mu[r, 0]) / sx
        zy = (target[r, 1] - mu[r, 1]) / sy
        one_m = 1.0 - rho[r] * rho[r]
        quad = (zx * zx - 2.0 * rho[r] * zx * zy + zy * zy) / one_m
        out[r] = (LOG_2PI + math.log(sx) + math.log(sy)
                  + 0.5 * math.log(one_m) + 0.5 * quad)
    return out


@_optional_njit
def nb_bvn_nll_backward(mu, sigma, rho, target, g):
    n = mu.shape[0]
    dmu = np.empty((n, 2))
    dsig = np.empty((n, 2))
    drho = np.empty(n)
    for r in range(n):
        sx = sigma[r, 0]
        sy = sigma[r, 1]
        p = rho[r]
        zx = (target[r, 0] - mu[r, 0]) / sx
        zy = (target[r, 1] - mu[r, 1]) / sy
        one_m = 1.0 - p * p
        quad = (zx * zx - 2.0 * p * zx * zy + zy * zy) / one_m
        dqx = (2.0 * zx - 2.0 * p * zy) / one_m
        dqy = (2.0 * zy - 2.0 * p * zx) / one_m
        dmu[r, 0] = g[r] * (-0.5 * dqx / sx)
        dmu[r, 1] = g[r] * (-0.5 * dqy / sy)
        dsig[r, 0] = g[r] * (1.0 / sx - 0.5 * dqx * zx / sx)
        dsig[r, 1] = g[r] * (1.0 / sy - 0.5 * dqy * zy / sy)
        drho[r] = g[r] * (-p / one_m + 0.5 * (-2.0 * zx * zy + 2.0 * p * quad) / one_m)
    return dmu, dsig, drho


_KERNELS = (
    "lstm_forward",
    "lstm_backward",
    "softmax_rows",
    "softmax_rows_backward",
    "segment_sum",
    "bvn_nll",
    "bvn_nll_backward",
)


# Transcendental-heavy forward kernels run faster on numpy's SIMD ufuncs than
# on numba's scalar libm calls (see benchmarks/bench_kernels.py), so they stay
# on numpy in both modes.
_NUMPY_ALWAYS = frozenset({"lstm_forward", "softmax_rows"})


def _bind(use_numba: bool) -> None:
    g = globals()
    for name in _KERNELS:
        prefix = "nb_" if use_numba and name not in _NUMPY_ALWAYS else "np_"
        g[name] = g[prefix + name]


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


_bind(USE_NUMBA)
