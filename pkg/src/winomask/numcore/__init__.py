"""Tensor arithmetic with reverse-mode autodiff, AdamW, and gradient checking."""

from .gradcheck import GradCheckResult, gradcheck
from .optim import OptimState, adamw_step, linear_warmup_lr
from .tensor import (
    MASK_SENTINEL,
    FullyMaskedRowError,
    ShapeError,
    Tensor,
    add,
    add_const,
    backward,
    clear_grads,
    concat_cols,
    cross_entropy_logits,
    dropout,
    embedding,
    gelu,
    layer_norm,
    masked_softmax,
    matmul,
    mean_all,
    mul,
    mul_const,
    parameter,
    scale,
    softmax_rows,
    sum_all,
    take_row,
    tanh,
    tensor,
    transpose,
)

__all__ = [
    "MASK_SENTINEL",
    "FullyMaskedRowError",
    "GradCheckResult",
    "OptimState",
    "ShapeError",
    "Tensor",
    "adamw_step",
    "add",
    "add_const",
    "backward",
    "clear_grads",
    "concat_cols",
    "cross_entropy_logits",
    "dropout",
    "embedding",
    "gelu",
    "gradcheck",
    "layer_norm",
    "linear_warmup_lr",
    "masked_softmax",
    "matmul",
    "mean_all",
    "mul",
    "mul_const",
    "parameter",
    "scale",
    "softmax_rows",
    "sum_all",
    "take_row",
    "tanh",
    "tensor",
    "transpose",
]
