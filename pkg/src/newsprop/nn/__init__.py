"""Dense float64 numeric core: differentiable primitives, parameters, Adam."""

from .autodiff import (
    Tensor,
    add,
    affine,
    backward,
    concat_cols,
    cross_entropy,
    edge_aggregate,
    gather_rows,
    leaky_relu,
    matmul,
    relu,
    segment_pool,
    segment_softmax,
    softmax,
    softmax_cross_entropy,
    spmm,
)
from .gradcheck import GradCheckResult, finite_difference_check
from .optim import AdamState, FitResult, TrainSettings, adam_step, fit
from .params import ParamStore, glorot_uniform, load_params, save_params

__all__ = [
    "AdamState", "FitResult", "GradCheckResult", "ParamStore", "Tensor", "TrainSettings", "adam_step", "add",
    "affine", "backward", "concat_cols", "cross_entropy", "edge_aggregate", "finite_difference_check", "fit",
    "gather_rows", "glorot_uniform", "leaky_relu", "load_params", "matmul", "relu", "save_params",
    "segment_pool", "segment_softmax", "softmax", "softmax_cross_entropy", "spmm",
]
