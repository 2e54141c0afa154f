"""Tensors, reverse-mode tape, layers, and Adam."""
from . import tensor as ops
from .gradcheck import GradCheckReport, check_gradients, finite_diff_check
from .nn import (
    MLP2,
    DecoderLayer,
    EncoderLayer,
    FeedForward,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    causal_mask,
    mlp2_forward,
)
from .optim import LR_GAUSSIAN, LR_NETWORK, Adam, AdamState, adam_step
from .tensor import (
    Tensor,
    as_tensor,
    backward,
    concat,
    matmul,
    no_grad,
    softmax,
    stack,
)

__all__ = [
    "Adam", "AdamState", "DecoderLayer", "EncoderLayer", "FeedForward", "GradCheckReport",
    "LR_GAUSSIAN", "LR_NETWORK", "LayerNorm", "Linear", "MLP2", "Module",
    "MultiHeadAttention", "Tensor", "adam_step", "as_tensor", "backward", "causal_mask",
    "check_gradients", "concat", "finite_diff_check", "matmul", "mlp2_forward", "no_grad",
    "ops", "softmax", "stack",
]
