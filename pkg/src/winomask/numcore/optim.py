"""AdamW with decoupled weight decay and a linear warmup/decay schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


def linear_warmup_lr(step: int, base_lr: float, warmup_frac: float, total_steps: int) -> float:
    """Learning rate at `step`: linear 0 -> base_lr over the warmup span,
    then linear base_lr -> 0 at total_steps."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0.0 <= warmup_frac <= 1.0:
        raise ValueError(f"warmup_frac must be in [0, 1], got {warmup_frac}")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup_steps = warmup_frac * total_steps
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    decay_steps = total_steps - warmup_steps
    if decay_steps <= 0:
        return 0.0
    return base_lr * (total_steps - step) / decay_steps


@dataclass
class OptimState:
    """Per-parameter Adam moments plus the schedule hyperparameters."""

    base_lr: float
    warmup_frac: float
    total_steps: int
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, Tensor], base_lr: float, warmup_frac: float,
                   total_steps: int, weight_decay: float = 0.0) -> "OptimState":
        state = cls(base_lr=base_lr, warmup_frac=warmup_frac,
                    total_steps=total_steps, weight_decay=weight_decay)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adamw_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
               state: OptimState, lr: float | None = None) -> None:
    """One AdamW update in place.

    The learning rate comes from linear_warmup_lr at the 0-based step index
    unless `lr` overrides it. Weight decay is decoupled from the moments.
    """
    if lr is None:
        lr = linear_warmup_lr(min(state.step, state.total_steps),
                              state.base_lr, state.warmup_frac, state.total_steps)
    t = state.step + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter {name!r} shape {p.data.shape}")
        m = state.m[name]
        v = state.v[name]
        if m.shape != p.data.shape:
            raise ValueError(f"optimizer state for {name!r} has shape {m.shape}, expected {p.data.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p.data
        p.data = p.data - p.data.dtype.type(lr) * update.astype(p.data.dtype)
    state.step = t
