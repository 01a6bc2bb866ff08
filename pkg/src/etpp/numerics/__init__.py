"""Minimal reverse-mode array engine, Adam, and a finite-difference checker."""
from .tape import (
    ShapeError,
    Tape,
    Tensor,
    add,
    as_tensor,
    concat,
    conv2d,
    dense,
    masked_sse,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    same_padding,
    select,
    sigmoid,
    stack,
    sub,
    tanh,
    total,
)
from .recurrent import GRU_KEYS, GRU_MODES, gru_activations, gru_cell
from .adam import AdamState, NonFiniteGradient, adam_step
from .gradcheck import GradCheckReport, analytic_gradients, grad_check

__all__ = [
    "ShapeError", "Tape", "Tensor", "add", "as_tensor", "concat", "conv2d", "dense",
    "masked_sse", "matmul", "mean", "mul", "relu", "reshape", "same_padding", "select",
    "sigmoid", "stack", "sub", "tanh", "total", "GRU_KEYS", "GRU_MODES", "gru_activations",
    "gru_cell", "AdamState", "NonFiniteGradient", "adam_step", "GradCheckReport",
    "analytic_gradients", "grad_check",
]
