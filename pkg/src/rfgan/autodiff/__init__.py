"""Minimal dense-tensor engine: reverse-mode autodiff, Adam, checkpoints, RNG streams."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .graph import ComputeGraph, forward
from .params import Adam, AdamState, Parameter, adam_step
from .rng import Streams, make_rng
from .tensor import (
    ACTIVATIONS,
    NonFiniteError,
    ShapeError,
    Tensor,
    as_tensor,
    backward,
    clip,
    concat,
    debug_checks,
    exp,
    grad,
    leaky_relu,
    linear,
    log,
    log_softmax,
    matmul,
    mean,
    no_grad,
    relu,
    sigmoid,
    sqrt,
    square,
    tanh,
)

__all__ = [
    "ACTIVATIONS", "Adam", "AdamState", "CheckpointError", "ComputeGraph", "NonFiniteError",
    "Parameter", "ShapeError", "Streams", "Tensor", "adam_step", "as_tensor", "backward",
    "clip", "concat", "debug_checks", "exp", "forward", "grad", "leaky_relu", "linear", "load_checkpoint",
    "log", "log_softmax", "make_rng", "matmul", "mean", "no_grad", "relu", "save_checkpoint",
    "sigmoid", "sqrt", "square", "tanh",
]
