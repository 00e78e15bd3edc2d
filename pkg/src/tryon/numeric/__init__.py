"""
Numeric substrate: float64 tensors with a reverse-mode tape, layers,
AdamW, the binary checkpoint format and finite-difference checks.
"""

from .tensor import Tensor, as_tensor, backward, no_grad
from .layers import Conv2d, Linear, Parameter, ParameterStore, ResidualBlock, SelfAttention, residual_block
from .optim import AdamW, OptimizerState, optimizer_step
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor", "as_tensor", "backward", "no_grad",
    "Conv2d", "Linear", "Parameter", "ParameterStore", "ResidualBlock", "SelfAttention", "residual_block",
    "AdamW", "OptimizerState", "optimizer_step",
    "load_checkpoint", "save_checkpoint",
]
