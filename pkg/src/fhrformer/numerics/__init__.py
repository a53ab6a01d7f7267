"""Minimal tensor engine: reverse-mode autodiff, fused layers, Adam, plateau scheduling."""

from .functional import dft_magnitude, dft_matrices, dropout, gelu, layer_norm, softmax
from .optim import AdamState, PlateauScheduler, adam_step, scheduler_step
from .tensor import (
    Tensor,
    add,
    as_tensor,
    div,
    exp,
    gather_rows,
    get_dtype,
    is_grad_enabled,
    linear,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    power,
    precision,
    reshape,
    sqrt,
    sub,
    swapaxes,
    tabs,
    transpose,
    tsum,
    unbroadcast,
    where,
)

__all__ = [
    "AdamState",
    "PlateauScheduler",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "dft_magnitude",
    "dft_matrices",
    "div",
    "dropout",
    "exp",
    "gather_rows",
    "gelu",
    "get_dtype",
    "is_grad_enabled",
    "layer_norm",
    "linear",
    "matmul",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "power",
    "precision",
    "reshape",
    "scheduler_step",
    "softmax",
    "sqrt",
    "sub",
    "swapaxes",
    "tabs",
    "transpose",
    "tsum",
    "unbroadcast",
    "where",
]
