"""Minimal differentiable kernel used by the trajectory model."""

from . import kernels, ops
from .gradcheck import grad_check, grad_check_blocks
from .layers import (
    GaussianBatch,
    GaussianParams2D,
    Linear,
    LSTMCellParams,
    LSTMState,
    bivariate_nll,
    constrain_head,
    embed,
    lstm_step,
    sample_bivariate,
    sample_bivariate_rows,
)
from .ops import affine, prelu, softmax
from .optim import AdamState, adam_step, clip_global_norm
from .tensor import NumericError, Tape, Tensor, constant, parameter

__all__ = [
    "AdamState", "GaussianBatch", "GaussianParams2D", "Linear", "LSTMCellParams",
    "LSTMState", "NumericError", "Tape", "Tensor", "adam_step", "affine",
    "bivariate_nll", "clip_global_norm", "constant", "constrain_head", "embed",
    "grad_check", "grad_check_blocks", "kernels", "lstm_step", "ops", "parameter",
    "prelu", "sample_bivariate", "sample_bivariate_rows", "softmax",
]
