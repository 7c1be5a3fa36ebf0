"""Finite-difference gradient checker for scalar-valued closures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, clear_grads


@dataclass
class GradCheckResult:
    passed: bool
    max_rel_err: float
    worst_input: int
    worst_index: tuple[int, ...]

    def __bool__(self) -> bool:
        return self.passed


def gradcheck(fn: Callable[[Sequence[Tensor]], Tensor], inputs: Sequence[Tensor],
              tol: float = 1e-4, step: float = 1e-5) -> GradCheckResult:
    """Compare reverse-mode gradients of fn against central differences.

    fn must map the given tensors to a scalar and be pure in them. Inputs
    must be float64 leaves: the 1e-4 default tolerance is meaningless in
    single precision. The relative error uses a unit floor in the
    denominator so near-zero coordinates are judged absolutely.
    """
    inputs = list(inputs)
    for i, t in enumerate(inputs):
        if t.data.dtype != np.float64:
            raise ValueError(f"gradcheck input {i} must be float64, got {t.data.dtype}")
        if not t.requires_grad:
            raise ValueError(f"gradcheck input {i} does not require grad")

    clear_grads(inputs)
    loss = fn(inputs)
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    clear_grads(inputs)

    worst = GradCheckResult(True, 0.0, -1, ())
    for i, t in enumerate(inputs):
        flat = t.data.reshape(-1)
        for j in range(flat.size):
            original = flat[j]
            flat[j] = original + step
            f_plus = float(fn(inputs).data)
            flat[j] = original - step
            f_minus = float(fn(inputs).data)
            flat[j] = original
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(analytic[i].reshape(-1)[j])
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if rel > worst.max_rel_err:
                idx = np.unravel_index(j, t.data.shape) if t.data.ndim else ()
                worst = GradCheckResult(True, rel, i, tuple(int(k) for k in idx))
    worst.passed = worst.max_rel_err < tol
    return worst
