"""Minimal numpy tensor kernel: autograd, layers, optimiser, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .layers import (
    BatchNorm2d,
    BiLSTM,
    BSConv2d,
    Conv2d,
    ConvSpec,
    Linear,
    LSTM,
    Module,
    ModuleList,
    param_count,
    param_ratio,
)
from .optim import Adam, OptimizerState, adam_step, cyclical_lr
from .tensor import Tensor, concat, flip, no_grad, stack

__all__ = [
    "Adam",
    "BatchNorm2d",
    "BiLSTM",
    "BSConv2d",
    "Conv2d",
    "ConvSpec",
    "Linear",
    "LSTM",
    "Module",
    "ModuleList",
    "OptimizerState",
    "Tensor",
    "adam_step",
    "concat",
    "cyclical_lr",
    "flip",
    "grad_check",
    "load_checkpoint",
    "no_grad",
    "param_count",
    "param_ratio",
    "save_checkpoint",
    "stack",
]
