"""Reverse-mode autodiff core: tensors, tape, optimizer, gradient checking."""

from .gradcheck import finite_diff_check
from .params import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    ADAM_LR,
    MissingGradError,
    ParamSet,
    adam_step,
    frozen,
    gaussian_param,
    ones_param,
    zeros_param,
)
from .tensor import (
    BN_MOMENTUM,
    BN_VAR_FLOOR,
    LEAKY_SLOPE,
    PROB_EPS,
    BatchNormState,
    GraphError,
    ShapeError,
    Tape,
    Tensor,
    activation,
    add,
    backward,
    batch_norm,
    bce_terms,
    blocks_log_likelihood,
    broadcast_channels,
    concat,
    conv2d_down,
    conv2d_up,
    flatten,
    leaky_relu,
    matmul,
    mean_all,
    mul,
    neg,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax_cross_entropy,
    square,
    stop_gradient,
    sub,
    sum_all,
    tanh,
)

__all__ = [name for name in dir() if not name.startswith("_")]
