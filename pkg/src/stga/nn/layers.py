"""Layer-level building blocks: affine+PReLU embedding, LSTM cell, Gaussian head."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import NumericError, Tensor, parameter


@dataclass
class Linear:
    W: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, out_dim: int, name: str) -> "Linear":
        bound = 1.0 / math.sqrt(in_dim)
        W = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        b = rng.uniform(-bound, bound, size=out_dim)
        return cls(parameter(W, f"{name}.W"), parameter(b, f"{name}.b"))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.affine(x, self.W, self.b)

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.W": self.W, f"{prefix}.b": self.b}


def embed(layer: Linear, x: Tensor, alpha: Tensor) -> Tensor:
    """Affine map followed by PReLU with the shared leak ``alpha``."""
    return ops.prelu(layer(x), alpha)


@dataclass
class LSTMCellParams:
    W_x: Tensor  # [4H, D]
    W_h: Tensor  # [4H, H]
    b: Tensor    # [4H]
    name: str = "lstm"

    @property
    def hidden(self) -> int:
        return self.W_h.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W_x.shape[1]

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, hidden: int, name: str) -> "LSTMCellParams":
        # Normal init scaled by fan-in; forget-gate bias starts at 1.
        W_x = rng.normal(0.0, 1.0 / math.sqrt(in_dim), size=(4 * hidden, in_dim))
        W_h = rng.normal(0.0, 1.0 / math.sqrt(hidden), size=(4 * hidden, hidden))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        return cls(parameter(W_x, f"{name}.W_x"), parameter(W_h, f"{name}.W_h"),
                   parameter(b, f"{name}.b"), name)

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.W_x": self.W_x, f"{prefix}.W_h": self.W_h, f"{prefix}.b": self.b}


@dataclass
class LSTMState:
    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, n_rows: int, hidden: int) -> "LSTMState":
        return cls(Tensor(np.zeros((n_rows, hidden))), Tensor(np.zeros((n_rows, hidden))))


def lstm_step(params: LSTMCellParams, state: LSTMState, x: Tensor) -> LSTMState:
    """One LSTM update for a batch of rows (or a single vector)."""
    single = x.value.ndim == 1
    if single:
        x = ops.reshape(x, (1, -1))
        state = LSTMState(ops.reshape(state.h, (1, -1)), ops.reshape(state.c, (1, -1)))
    if x.shape[1] != params.input_dim or state.h.shape[1] != params.hidden:
        raise ValueError(
            f"{params.name}: input {x.shape} / state {state.h.shape} do not match "
            f"D={params.input_dim}, H={params.hidden}")
    try:
        z = ops.add(ops.affine(x, params.W_x, params.b), ops.affine(state.h, params.W_h))
        hc = ops.lstm_pointwise(z, state.c, params.name)
    except NumericError as exc:
        raise NumericError(f"{exc} in parameter block {params.name!r}", exc.rows) from exc
    H = params.hidden
    h, c = ops.columns(hc, 0, H), ops.columns(hc, H, 2 * H)
    if single:
        h, c = ops.reshape(h, (H,)), ops.reshape(c, (H,))
    return LSTMState(h, c)


@dataclass(frozen=True)
class GaussianParams2D:
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    rho: float

    def __post_init__(self):
        if not (self.sigma_x > 0.0 and self.sigma_y > 0.0 and abs(self.rho) < 1.0):
            raise ValueError(f"invalid bivariate parameters: {self}")

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.mu_x, self.mu_y])

    @property
    def covariance(self) -> np.ndarray:
        sxy = self.rho * self.sigma_x * self.sigma_y
        return np.array([[self.sigma_x ** 2, sxy], [sxy, self.sigma_y ** 2]])


@dataclass
class GaussianBatch:
    """Differentiable head output for N rows."""

    mu: Tensor     # [N, 2]
    sigma: Tensor  # [N, 2]
    rho: Tensor    # [N]

    def __len__(self) -> int:
        return self.mu.shape[0]

    def row(self, i: int) -> GaussianParams2D:
        m, s = self.mu.value[i], self.sigma.value[i]
        return GaussianParams2D(float(m[0]), float(m[1]), float(s[0]), float(s[1]),
                                float(self.rho.value[i]))


def constrain_head(raw: Tensor) -> GaussianBatch:
    """Map unconstrained head output [N, 5] (or [5]) to valid bivariate parameters.

    mu passes through, sigma = exp(.), rho = tanh(.).
    """
    if raw.value.ndim == 1:
        raw = ops.reshape(raw, (1, 5))
    mu = ops.columns(raw, 0, 2)
    sigma = ops.exp(ops.columns(raw, 2, 4))
    rho = ops.reshape(ops.tanh(ops.columns(raw, 4, 5)), (raw.shape[0],))
    return GaussianBatch(mu, sigma, rho)


def bivariate_nll(p: GaussianParams2D | GaussianBatch, target) -> Tensor | float:
    """Negative log density of ``target`` under a bivariate normal.

    Given a :class:`GaussianParams2D` returns a float; given a
    :class:`GaussianBatch` returns the per-row losses as a tensor.
    """
    if isinstance(p, GaussianParams2D):
        out = ops.bivariate_nll(
            Tensor(p.mean[None, :]), Tensor([[p.sigma_x, p.sigma_y]]),
            Tensor([p.rho]), np.asarray(target, dtype=np.float64).reshape(1, 2))
        return float(out.value[0])
    return ops.bivariate_nll(p.mu, p.sigma, p.rho, np.asarray(target, dtype=np.float64))


def sample_bivariate(p: GaussianParams2D, rng: np.random.Generator) -> tuple[float, float]:
    z = rng.standard_normal(2)
    x = p.mu_x + p.sigma_x * z[0]
    y = p.mu_y + p.sigma_y * (p.rho * z[0] + math.sqrt(1.0 - p.rho * p.rho) * z[1])
    return float(x), float(y)


def sample_bivariate_rows(mu: np.ndarray, sigma: np.ndarray, rho: np.ndarray,
                          rng: np.random.Generator) -> np.ndarray:
    """Cholesky draws for N rows at once; row i consumes two normals in order."""
    z = rng.standard_normal((mu.shape[0], 2))
    out = np.empty_like(mu)
    out[:, 0] = mu[:, 0] + sigma[:, 0] * z[:, 0]
    out[:, 1] = mu[:, 1] + sigma[:, 1] * (rho * z[:, 0] + np.sqrt(1.0 - rho * rho) * z[:, 1])
    return out
