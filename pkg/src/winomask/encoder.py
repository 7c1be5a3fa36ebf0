"""Transformer encoder with configurable dependency-mask injection.

Masks can be injected *inside* a chosen range of the existing attention
layers, or *outside* via a stack of t recurrent applications of one extra
attention layer whose parameters are shared across all t steps. The
next-sentence head reads a tanh-affine pooling of the final [CLS] state.

Sublayers are post-norm (residual then layer norm); query/key/value
projections are bias-free, the output and feed-forward affines carry
biases; the feed-forward activation is exact-erf GELU.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .tokenizer import Encoding

IS_NEXT = 1
NOT_NEXT = 0

INIT_STD = 0.02


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    num_layers: int = 2
    num_heads: int = 2
    hidden_size: int = 32
    ff_size: int = 64
    max_positions: int = 64
    segment_types: int = 2
    dropout_rate: float = 0.1
    scale_mode: str = "sqrt_dk"   # sqrt_dk | dk
    mask_mode: str = "additive"   # additive | multiplicative

    def __post_init__(self):
        for name in ("vocab_size", "num_layers", "num_heads", "hidden_size",
                     "ff_size", "max_positions", "segment_types"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.hidden_size % self.num_heads != 0:
            raise ValueError(f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}")
        if self.scale_mode not in ("sqrt_dk", "dk"):
            raise ValueError(f"unknown scale_mode {self.scale_mode!r}")
        if self.mask_mode not in ("additive", "multiplicative"):
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def head_size(self) -> int:
        return self.hidden_size // self.num_heads

    @property
    def attn_scale(self) -> float:
        dk = self.head_size
        return float(np.sqrt(dk)) if self.scale_mode == "sqrt_dk" else float(dk)


def resolve_inside_indices(position: str, t: int, num_layers: int) -> tuple[int, ...]:
    """Layer indices for masking the first, middle, or last t layers.

    The middle window follows the reference configurations: when the t
    consecutive layers cannot be centered exactly, the start rounds down
    for stacks of at most 12 layers and up for deeper stacks.
    """
    if not 1 <= t <= num_layers:
        raise ValueError(f"t must be in [1, {num_layers}], got {t}")
    if position == "first":
        start = 0
    elif position == "last":
        start = num_layers - t
    elif position == "middle":
        if (num_layers - t) % 2 == 0:
            start = (num_layers - t) // 2
        elif num_layers <= 12:
            start = (num_layers - t) // 2
        else:
            start = (num_layers - t + 1) // 2
    else:
        raise ValueError(f"unknown position {position!r}")
    return tuple(range(start, start + t))


@dataclass(frozen=True)
class MaskPlan:
    """Where the dependency mask enters the encoder."""

    kind: str = "none"                       # none | inside | outside
    inside_layers: tuple[int, ...] = ()
    t: int = 0                               # recurrence depth for outside plans

    def __post_init__(self):
        if self.kind not in ("none", "inside", "outside"):
            raise ValueError(f"unknown plan kind {self.kind!r}")
        if self.kind == "outside" and self.t < 1:
            raise ValueError("outside plan requires recurrence depth t >= 1")
        if self.kind != "inside" and self.inside_layers:
            raise ValueError(f"{self.kind} plan must not carry inside layer indices")

    @staticmethod
    def none() -> "MaskPlan":
        return MaskPlan(kind="none")

    @staticmethod
    def inside(layers) -> "MaskPlan":
        return MaskPlan(kind="inside", inside_layers=tuple(sorted(set(int(i) for i in layers))))

    @staticmethod
    def inside_range(position: str, t: int, num_layers: int) -> "MaskPlan":
        return MaskPlan(kind="inside", inside_layers=resolve_inside_indices(position, t, num_layers))

    @staticmethod
    def outside(t: int) -> "MaskPlan":
        return MaskPlan(kind="outside", t=int(t))

    def validate(self, num_layers: int) -> None:
        for i in self.inside_layers:
            if not 0 <= i < num_layers:
                raise ValueError(f"inside layer index {i} outside [0, {num_layers})")

    def needs_mask(self) -> bool:
        return self.kind == "outside" or (self.kind == "inside" and bool(self.inside_layers))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "inside_layers": list(self.inside_layers), "t": self.t}

    @staticmethod
    def from_dict(d: dict) -> "MaskPlan":
        return MaskPlan(kind=d["kind"], inside_layers=tuple(d["inside_layers"]), t=d["t"])


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def _layer_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    d, dk, ff = config.hidden_size, config.head_size, config.ff_size
    shapes: dict[str, tuple[int, ...]] = {}
    for j in range(config.num_heads):
        shapes[f"attn.head{j}.wq"] = (d, dk)
        shapes[f"attn.head{j}.wk"] = (d, dk)
        shapes[f"attn.head{j}.wv"] = (d, dk)
    shapes["attn.wo"] = (d, d)
    shapes["attn.bo"] = (d,)
    shapes["attn.ln_gain"] = (d,)
    shapes["attn.ln_bias"] = (d,)
    shapes["ff.w1"] = (d, ff)
    shapes["ff.b1"] = (ff,)
    shapes["ff.w2"] = (ff, d)
    shapes["ff.b2"] = (d,)
    shapes["ff.ln_gain"] = (d,)
    shapes["ff.ln_bias"] = (d,)
    return shapes


def param_shapes(config: EncoderConfig, plan_kind: str = "none") -> dict[str, tuple[int, ...]]:
    """Every named tensor and its dims; a pure function of config and plan kind.

    Outside plans add exactly one extra layer block regardless of the
    recurrence depth (the recurrent steps share parameters).
    """
    d = config.hidden_size
    shapes: dict[str, tuple[int, ...]] = {
        "emb.token": (config.vocab_size, d),
        "emb.pos": (config.max_positions, d),
        "emb.seg": (config.segment_types, d),
        "emb.ln_gain": (d,),
        "emb.ln_bias": (d,),
    }
    for i in range(config.num_layers):
        for name, shape in _layer_shapes(config).items():
            shapes[f"layer{i}.{name}"] = shape
    if plan_kind == "outside":
        for name, shape in _layer_shapes(config).items():
            shapes[f"outer.{name}"] = shape
    shapes["pool.w"] = (d, d)
    shapes["pool.b"] = (d,)
    shapes["cls.w"] = (d, 2)
    shapes["cls.b"] = (2,)
    return shapes


def init_params(config: EncoderConfig, plan: MaskPlan, seed: int,
                dtype=np.float32) -> dict[str, nc.Tensor]:
    """Fresh parameters: clipped-normal weights (std 0.02), zero biases,
    unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    params: dict[str, nc.Tensor] = {}
    for name, shape in param_shapes(config, plan.kind).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "ln_gain":
            data = np.ones(shape, dtype=dtype)
        elif leaf == "ln_bias" or leaf.startswith("b"):
            data = np.zeros(shape, dtype=dtype)
        else:
            data = np.clip(rng.normal(0.0, INIT_STD, size=shape),
                           -2 * INIT_STD, 2 * INIT_STD).astype(dtype)
        params[name] = nc.Tensor(data, requires_grad=True)
    return params


def layer_view(params: dict[str, nc.Tensor], prefix: str) -> dict[str, nc.Tensor]:
    """Select one layer block's tensors, keyed by their short names."""
    view = {k[len(prefix) + 1:]: v for k, v in params.items() if k.startswith(prefix + ".")}
    if not view:
        raise KeyError(f"no parameters under prefix {prefix!r}")
    return view


def count_parameters(params: dict[str, nc.Tensor]) -> int:
    return sum(p.data.size for p in params.values())


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def attention_layer(h: nc.Tensor, layer_params: dict[str, nc.Tensor],
                    mask: np.ndarray | None, config: EncoderConfig,
                    train_mode: bool = False,
                    dropout_rng: np.random.Generator | None = None,
                    return_heads: bool = False):
    """One attention + feed-forward block.

    Per head: project queries/keys/values, scale the dot-product scores,
    apply the dependency mask if present, and average values; head outputs
    are concatenated, output-projected, residual-added, and normalized,
    followed by the feed-forward sublayer with its own residual + norm.
    """
    n = h.data.shape[0]
    if mask is not None and np.asarray(mask).shape != (n, n):
        raise nc.ShapeError(f"mask dims {np.asarray(mask).shape} != ({n}, {n})")
    head_outputs = []
    for j in range(config.num_heads):
        q = nc.matmul(h, layer_params[f"attn.head{j}.wq"])
        k = nc.matmul(h, layer_params[f"attn.head{j}.wk"])
        v = nc.matmul(h, layer_params[f"attn.head{j}.wv"])
        scores = nc.scale(nc.matmul(q, nc.transpose(k)), 1.0 / config.attn_scale)
        if mask is not None:
            probs = nc.masked_softmax(scores, mask, config.mask_mode)
        else:
            probs = nc.softmax_rows(scores)
        head_outputs.append(nc.matmul(probs, v))
    merged = nc.concat_cols(head_outputs)
    attn_out = nc.add(nc.matmul(merged, layer_params["attn.wo"]), layer_params["attn.bo"])
    attn_out = _maybe_dropout(attn_out, config, train_mode, dropout_rng)
    x = nc.layer_norm(nc.add(h, attn_out),
                      layer_params["attn.ln_gain"], layer_params["attn.ln_bias"])
    hidden = nc.gelu(nc.add(nc.matmul(x, layer_params["ff.w1"]), layer_params["ff.b1"]))
    ff_out = nc.add(nc.matmul(hidden, layer_params["ff.w2"]), layer_params["ff.b2"])
    ff_out = _maybe_dropout(ff_out, config, train_mode, dropout_rng)
    out = nc.layer_norm(nc.add(x, ff_out), layer_params["ff.ln_gain"], layer_params["ff.ln_bias"])
    if return_heads:
        return out, [hd.data for hd in head_outputs]
    return out


def _maybe_dropout(x: nc.Tensor, config: EncoderConfig, train_mode: bool,
                   rng: np.random.Generator | None) -> nc.Tensor:
    if not train_mode or config.dropout_rate == 0.0:
        return x
    if rng is None:
        raise ValueError("train_mode with dropout requires a dropout rng")
    return nc.dropout(x, config.dropout_rate, rng)


def encoder_forward(encoding: Encoding, mask: np.ndarray | None,
                    params: dict[str, nc.Tensor], config: EncoderConfig,
                    plan: MaskPlan, train_mode: bool = False,
                    dropout_rng: np.random.Generator | None = None
                    ) -> tuple[nc.Tensor, nc.Tensor]:
    """Full encoder pass; returns (hidden states [n x d], pooled [1 x d]).

    Inside plans apply the mask at exactly the plan's layer indices;
    outside plans run every base layer unmasked and then t recurrent,
    masked applications of the single shared outer layer.
    """
    n = len(encoding)
    if n > config.max_positions:
        raise ValueError(f"sequence length {n} exceeds max_positions {config.max_positions}")
    plan.validate(config.num_layers)
    if plan.needs_mask() and mask is None:
        raise ValueError(f"plan kind {plan.kind!r} requires a dependency mask")

    h = nc.add(nc.add(nc.embedding(params["emb.token"], encoding.token_ids),
                      nc.embedding(params["emb.pos"], list(range(n)))),
               nc.embedding(params["emb.seg"], encoding.segment_ids))
    h = nc.layer_norm(h, params["emb.ln_gain"], params["emb.ln_bias"])
    h = _maybe_dropout(h, config, train_mode, dropout_rng)

    inside = set(plan.inside_layers) if plan.kind == "inside" else set()
    for i in range(config.num_layers):
        layer_mask = mask if i in inside else None
        h = attention_layer(h, layer_view(params, f"layer{i}"), layer_mask, config,
                            train_mode=train_mode, dropout_rng=dropout_rng)
    if plan.kind == "outside":
        outer = layer_view(params, "outer")
        for _ in range(plan.t):
            h = attention_layer(h, outer, mask, config,
                                train_mode=train_mode, dropout_rng=dropout_rng)
    return h, pool_cls(h, params)


def pool_cls(hidden: nc.Tensor, params: dict[str, nc.Tensor]) -> nc.Tensor:
    """tanh-affine pooling of the [CLS] (first) position."""
    return nc.tanh(nc.add(nc.matmul(nc.take_row(hidden, 0), params["pool.w"]),
                          params["pool.b"]))


def nsp_logits(pooled: nc.Tensor, params: dict[str, nc.Tensor]) -> nc.Tensor:
    """Two-class next-sentence logits [1 x 2] (NotNext, IsNext)."""
    return nc.add(nc.matmul(pooled, params["cls.w"]), params["cls.b"])


def nsp_probability(pooled: nc.Tensor, params: dict[str, nc.Tensor]) -> float:
    """Probability that segment B follows segment A."""
    probs = nc.softmax_rows(nsp_logits(pooled, params))
    return float(probs.data[0, IS_NEXT])
