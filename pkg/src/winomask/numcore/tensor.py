"""Dense 32/64-bit float tensors with reverse-mode automatic differentiation.

Every operation builds an implicit computation graph (parent links plus a
backward closure per node). Calling ``Tensor.backward()`` on a scalar walks
that graph once in reverse topological order and accumulates gradients by
summation over all paths. Training runs in float32; float64 exists for
finite-difference gradient checking, where 1e-4 tolerances are unreachable
in single precision.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

# Additive-mask sentinel: large enough that exp() underflows to exactly 0
# after the max-shift, small enough to keep every intermediate finite.
MASK_SENTINEL = -1e9

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ShapeError(ValueError):
    """Operand dimensions are incompatible with the requested operation."""


class FullyMaskedRowError(ValueError):
    """A softmax row has no unmasked position left (invalid mask)."""


class Tensor:
    """A numpy array plus the bookkeeping needed for backpropagation."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], None] | None = _backward

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable node."""
        if self.data.ndim != 0:
            raise ShapeError(f"backward requires a scalar loss, got dims {self.dims}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        _accumulate(self, np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(dims={self.dims}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    """Build a leaf tensor with an explicit dtype."""
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def parameter(data, dtype=np.float32) -> Tensor:
    return tensor(data, requires_grad=True, dtype=dtype)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad and t._backward is None:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    if any(p.requires_grad or p._parents for p in parents):
        return Tensor(data, requires_grad=any(p.requires_grad for p in parents),
                      _parents=tuple(parents), _backward=backward_fn)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    out = a.data * a.data.dtype.type(c)

    def bwd(g):
        _accumulate(a, g * a.data.dtype.type(c))

    return _node(out, (a,), bwd)


def add_const(a: Tensor, c: np.ndarray) -> Tensor:
    """Add a constant array (no gradient flows into the constant)."""
    out = a.data + np.asarray(c, dtype=a.data.dtype)

    def bwd(g):
        _accumulate(a, g)

    return _node(out, (a,), bwd)


def mul_const(a: Tensor, c: np.ndarray) -> Tensor:
    const = np.asarray(c, dtype=a.data.dtype)
    out = a.data * const

    def bwd(g):
        _accumulate(a, g * const)

    return _node(out, (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def bwd(g):
        _accumulate(a, np.full_like(a.data, g))

    return _node(out, (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out = np.asarray(a.data.mean(), dtype=a.data.dtype)

    def bwd(g):
        _accumulate(a, np.full_like(a.data, g / n))

    return _node(out, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def bwd(g):
        _accumulate(a, g * (1.0 - y * y))

    return _node(y, (a,), bwd)


def gelu(a: Tensor) -> Tensor:
    """Exact-erf GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    y = (x * cdf).astype(x.dtype)

    def bwd(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        _accumulate(a, (g * (cdf + x * pdf)).astype(x.dtype))

    return _node(y, (a,), bwd)


# ---------------------------------------------------------------------------
# matrix ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible dims {a.dims} x {b.dims}")
    out = a.data @ b.data

    def bwd(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(out, (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got dims {a.dims}")
    out = a.data.T

    def bwd(g):
        _accumulate(a, g.T)

    return _node(out, (a,), bwd)


def concat_cols(parts: Iterable[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts or any(p.data.ndim != 2 for p in parts):
        raise ShapeError("concat_cols expects one or more matrices")
    widths = [p.data.shape[1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=1)

    def bwd(g):
        off = 0
        for p, w in zip(parts, widths):
            _accumulate(p, g[:, off:off + w])
            off += w

    return _node(out, tuple(parts), bwd)


def take_row(a: Tensor, i: int) -> Tensor:
    """Slice row i as a 1 x d matrix."""
    out = a.data[i:i + 1, :].copy()

    def bwd(g):
        full = np.zeros_like(a.data)
        full[i:i + 1, :] = g
        _accumulate(a, full)

    return _node(out, (a,), bwd)


def embedding(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of an embedding table; backward scatter-adds."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("embedding ids must be a flat sequence")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeError(f"embedding id out of range for table dims {table.dims}")
    out = table.data[idx]

    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        _accumulate(table, full)

    return _node(out, (table,), bwd)


# ---------------------------------------------------------------------------
# softmax family
# ---------------------------------------------------------------------------

def _softmax_forward(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    if np.any(m <= 0.5 * MASK_SENTINEL):
        row = int(np.argmax(m[:, 0] <= 0.5 * MASK_SENTINEL))
        raise FullyMaskedRowError(f"fully masked row {row} in softmax input")
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax, shift-invariant via max subtraction."""
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got dims {a.dims}")
    y = _softmax_forward(a.data)

    def bwd(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        _accumulate(a, y * (g - dot))

    return _node(y, (a,), bwd)


def masked_softmax(logits: Tensor, mask: np.ndarray, mode: str = "additive") -> Tensor:
    """Row softmax under a binary mask.

    additive: masked positions get a MASK_SENTINEL offset before the softmax,
    driving their probability below 1e-7 (0.0 in practice). multiplicative:
    the literal elementwise product of logits and mask, which leaves masked
    logits at 0 and so still assigns them weight.
    """
    m = np.asarray(mask)
    if m.shape != logits.data.shape:
        raise ShapeError(f"mask dims {m.shape} != logits dims {logits.dims}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mask entries must be 0 or 1")
    if mode not in ("additive", "multiplicative"):
        raise ValueError(f"unknown mask mode: {mode!r}")
    if m.all():
        # no-op mask: keep the result bit-identical to the unmasked softmax
        return softmax_rows(logits)
    if mode == "additive":
        if not m.any(axis=1).all():
            row = int(np.argmin(m.any(axis=1)))
            raise FullyMaskedRowError(f"fully masked row {row} in additive mask")
        offset = (1.0 - m.astype(logits.data.dtype)) * MASK_SENTINEL
        return softmax_rows(add_const(logits, offset))
    return softmax_rows(mul_const(logits, m.astype(logits.data.dtype)))


# ---------------------------------------------------------------------------
# normalization, dropout, loss
# ---------------------------------------------------------------------------

def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row standardization followed by an elementwise affine."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    if x.data.ndim != 2 or gain.data.shape != (x.data.shape[1],) or bias.data.shape != (x.data.shape[1],):
        raise ShapeError(f"layer_norm dims x={x.dims} gain={gain.dims} bias={bias.dims}")
    mu = x.data.mean(axis=1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = (x.data - mu) * inv
    y = xhat * gain.data + bias.data

    def bwd(g):
        _accumulate(gain, (g * xhat).sum(axis=0))
        _accumulate(bias, g.sum(axis=0))
        dxhat = g * gain.data
        dx = inv * (dxhat
                    - dxhat.mean(axis=1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        _accumulate(x, dx)

    return _node(y, (x, gain, bias), bwd)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype) / x.data.dtype.type(1.0 - rate)
    return mul_const(x, keep)


def cross_entropy_logits(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of labels under row-wise softmax(logits)."""
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy_logits expects a matrix, got dims {logits.dims}")
    idx = np.asarray(labels, dtype=np.int64)
    r, c = logits.data.shape
    if idx.shape != (r,):
        raise ShapeError(f"labels length {idx.shape} != rows {r}")
    if idx.size and (idx.min() < 0 or idx.max() >= c):
        raise ValueError("label out of range")
    m = logits.data.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits.data - m).sum(axis=1))
    nll = lse - logits.data[np.arange(r), idx]
    out = np.asarray(nll.mean(), dtype=logits.data.dtype)

    def bwd(g):
        probs = np.exp(logits.data - lse[:, None])
        probs[np.arange(r), idx] -= 1.0
        _accumulate(logits, probs * (g / r))

    return _node(out, (logits,), bwd)


# ---------------------------------------------------------------------------
# gradient collection
# ---------------------------------------------------------------------------

def backward(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Backpropagate from a scalar loss and collect per-parameter gradients.

    Parameters the loss does not reach get an all-zero gradient.
    """
    loss.backward()
    return {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in params.items()}


def clear_grads(params: Iterable[Tensor] | dict[str, Tensor]) -> None:
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.grad = None
