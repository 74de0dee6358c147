"""Minimal reverse-mode automatic differentiation over float64 numpy arrays."""

from .conv import conv2d, conv_output_size, conv_transpose2d, conv_transpose_output_size
from .gradcheck import GradCheckResult, grad_check, grad_check_report
from .ops import (
    abs,
    add,
    clamp,
    elementwise,
    l1_norm,
    l2_norm,
    leaky_relu,
    log,
    matmul,
    mean,
    mul,
    neg,
    reduce,
    reflect_pad,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax_cross_entropy,
    sqrt,
    square,
    sub,
    sum,
    tanh,
)
from .tensor import (
    AutodiffError,
    ContractError,
    DomainError,
    ShapeError,
    Tape,
    Tensor,
    active_tape,
    backward,
    no_tape,
)

__all__ = [
    "AutodiffError", "ContractError", "DomainError", "GradCheckResult", "ShapeError", "Tape", "Tensor",
    "abs", "active_tape", "add", "backward", "clamp", "conv2d", "conv_output_size", "conv_transpose2d",
    "conv_transpose_output_size", "elementwise", "grad_check", "grad_check_report", "l1_norm", "l2_norm",
    "leaky_relu", "log", "matmul", "mean", "mul", "neg", "no_tape", "reduce", "reflect_pad", "relu",
    "reshape", "scale", "sigmoid", "softmax_cross_entropy", "sqrt", "square", "sub", "sum", "tanh",
]
