"""Small reverse-mode differentiation substrate on top of numpy float64 arrays."""

from . import backend, ops
from .checkpoint import ModelCheckpoint
from .module import Module, param, params_checksum
from .ops import (
    add, concat, conv_out_len, dropout, graph_aggregate, layer_norm, matmul, mean, mse, mul, relu,
    repeat, reshape, scale, softmax, sub, temporal_conv1d, transpose,
)
from .ops import sum as reduce_sum
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, backward, no_grad

__all__ = [
    "Adam", "AdamState", "ModelCheckpoint", "Module", "Tensor", "adam_step", "add",
    "backend", "backward", "concat", "conv_out_len", "dropout", "graph_aggregate", "layer_norm", "matmul",
    "mean", "mse", "mul", "no_grad", "ops", "param", "params_checksum", "reduce_sum",
    "relu", "repeat", "reshape", "scale", "softmax", "sub", "temporal_conv1d", "transpose",
]
