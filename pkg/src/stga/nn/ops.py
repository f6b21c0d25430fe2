"""Differentiable operations over :class:`Tensor`.

Each op computes its value eagerly and hands :func:`make_result` a closure
mapping the output adjoint to one adjoint per parent (``None`` = no gradient).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels
from .tensor import Tensor, make_result


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return make_result(a.value + b.value, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)
    return make_result(a.value - b.value, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)
    return make_result(a.value * b.value, (a, b), backward, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    return make_result(a.value * c, (a,), lambda g: (g * c,), "scale")


def affine(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W.T + b`` for ``x`` of shape [D] or [N, D] and ``W`` of shape [K, D]."""
    if W.value.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise ValueError(f"affine shape mismatch: x{x.shape} vs W{W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise ValueError(f"affine bias shape {b.shape} does not match W{W.shape}")
    xv, Wv = x.value, W.value
    out = xv @ Wv.T
    if b is not None:
        out = out + b.value

    def backward(g):
        gx = g @ Wv
        if xv.ndim == 1:
            gW = np.outer(g, xv)
            gb = g
        else:
            gW = g.T @ xv
            gb = g.sum(axis=0)
        return (gx, gW, gb) if b is not None else (gx, gW)

    parents = (x, W, b) if b is not None else (x, W)
    return make_result(out, parents, backward, "affine")


def prelu(x: Tensor, alpha: Tensor) -> Tensor:
    """``max(0, x) + alpha * min(0, x)`` with a learnable scalar ``alpha``."""
    xv = x.value
    a = float(alpha.value.reshape(()))
    neg = np.minimum(xv, 0.0)
    out = np.maximum(xv, 0.0) + a * neg

    def backward(g):
        gx = np.where(xv > 0.0, g, a * g)
        galpha = np.asarray((g * neg).sum()).reshape(alpha.shape)
        return gx, galpha

    return make_result(out, (x, alpha), backward, "prelu")


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, max-shifted."""
    xv = x.value
    flat = np.ascontiguousarray(xv.reshape(-1, xv.shape[-1]))
    y = kernels.softmax_rows(flat)

    def backward(g):
        gx = kernels.softmax_rows_backward(y, np.ascontiguousarray(g.reshape(y.shape)))
        return (gx.reshape(xv.shape),)

    return make_result(y.reshape(xv.shape), (x,), backward, "softmax")


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = np.exp(x.value)
    return make_result(y, (x,), lambda g: (g * y,), "exp")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)
    return make_result(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-x.value))
    return make_result(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def index(x: Tensor, idx) -> Tensor:
    """Basic or advanced indexing; gradients scatter back with ``np.add.at``."""
    out = x.value[idx]

    def backward(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, idx, g)
        return (gx,)

    return make_result(np.array(out, dtype=np.float64), (x,), backward, "index", check=False)


def columns(x: Tensor, start: int, stop: int) -> Tensor:
    """Slice ``x[..., start:stop]``."""
    out = x.value[..., start:stop]

    def backward(g):
        gx = np.zeros_like(x.value)
        gx[..., start:stop] = g
        return (gx,)

    return make_result(np.array(out), (x,), backward, "columns", check=False)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    values = [p.value for p in parts]
    out = np.concatenate(values, axis=axis)
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [v.shape[ax] for v in values])

    def backward(g):
        grads = []
        for k in range(len(parts)):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(bounds[k], bounds[k + 1])
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return make_result(out, tuple(parts), backward, "concat", check=False)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Rows ``x[idx]``; an index of -1 yields a zero row (fresh recurrent state)."""
    idx = np.asarray(idx, dtype=np.int64)
    n_cols = x.shape[1]
    out = np.zeros((len(idx), n_cols))
    hit = idx >= 0
    out[hit] = x.value[idx[hit]]

    def backward(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, idx[hit], g[hit])
        return (gx,)

    return make_result(out, (x,), backward, "gather_rows", check=False)


def segment_mean(x: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    """Average the rows of ``x`` that share a segment label.

    Rows are accumulated in their given order, so callers control the
    floating-point summation order per segment.  Empty segments yield zeros.
    """
    seg = np.ascontiguousarray(seg, dtype=np.int64)
    counts = np.bincount(seg, minlength=n_segments).astype(np.float64)
    inv = np.divide(1.0, counts, out=np.zeros_like(counts), where=counts > 0)
    total = kernels.segment_sum(np.ascontiguousarray(x.value), seg, n_segments)
    out = total * inv[:, None]

    def backward(g):
        return ((g * inv[:, None])[seg],)

    return make_result(out, (x,), backward, "segment_mean")


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar ``sum(weights * x)`` with constant weights."""
    w = np.asarray(weights, dtype=np.float64)
    out = np.asarray(float((w * x.value).sum()))
    return make_result(out, (x,), lambda g: (g * w,), "weighted_sum")


def total(x: Tensor) -> Tensor:
    return make_result(np.asarray(x.value.sum()), (x,),
                       lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def mean(x: Tensor) -> Tensor:
    n = x.value.size
    return make_result(np.asarray(x.value.mean()), (x,),
                       lambda g: (np.broadcast_to(g / n, x.shape).copy(),), "mean")


def lstm_pointwise(z: Tensor, c_prev: Tensor, block: str = "lstm") -> Tensor:
    """Gate nonlinearities of an LSTM cell.

    ``z`` holds pre-activations [N, 4H] in (input, forget, candidate, output)
    order.  Returns ``concat(h, c)`` of shape [N, 2H].
    """
    zv = np.ascontiguousarray(z.value)
    cv = np.ascontiguousarray(c_prev.value)
    h, c, gates, tc = kernels.lstm_forward(zv, cv)
    n_hidden = cv.shape[1]

    def backward(g):
        dh = np.ascontiguousarray(g[:, :n_hidden])
        dc = np.ascontiguousarray(g[:, n_hidden:])
        dz, dc_prev = kernels.lstm_backward(dh, dc, cv, gates, tc)
        return dz, dc_prev

    return make_result(np.concatenate([h, c], axis=1), (z, c_prev), backward,
                       f"lstm_pointwise[{block}]")


def bivariate_nll(mu: Tensor, sigma: Tensor, rho: Tensor, target: np.ndarray) -> Tensor:
    """Row-wise ``-log N(target; mu, sigma, rho)``.

    Shapes: mu, sigma, target [N, 2]; rho [N].  Raises ``ValueError`` when a
    row has a non-positive sigma or ``|rho| >= 1``.
    """
    sv, rv = sigma.value, rho.value
    if np.any(sv <= 0.0) or np.any(np.abs(rv) >= 1.0):
        raise ValueError("bivariate_nll: need sigma > 0 and |rho| < 1")
    mv = np.ascontiguousarray(mu.value)
    sv = np.ascontiguousarray(sv)
    rv = np.ascontiguousarray(rv)
    tv = np.ascontiguousarray(target, dtype=np.float64)
    out = kernels.bvn_nll(mv, sv, rv, tv)

    def backward(g):
        return kernels.bvn_nll_backward(mv, sv, rv, tv, np.ascontiguousarray(g))

    return make_result(out, (mu, sigma, rho), backward, "bivariate_nll")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.value.reshape(shape)
    return make_result(out.copy(), (x,), lambda g: (g.reshape(x.shape),), "reshape", check=False)
