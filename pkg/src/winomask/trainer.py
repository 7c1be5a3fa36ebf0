"""Fine-tuning: labeled example construction, the training loop, checkpoints.

Every schema contributes two examples: the correct substitution labeled
IsNext and the incorrect one labeled NotNext, trained with per-sentence
two-class cross-entropy so training mirrors how candidates are scored.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np

from . import numcore as nc
from .depmask import DepParse, build_word_mask, expand_to_subwords
from .encoder import (
    IS_NEXT,
    NOT_NEXT,
    EncoderConfig,
    MaskPlan,
    encoder_forward,
    nsp_logits,
    param_shapes,
)
from .schema import Schema, SchemaError, generate_candidates
from .tokenizer import Encoding, Vocab, encode_pair

CHECKPOINT_MAGIC = b"WMK1"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """Optimization produced a non-finite loss."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed, truncated, or inconsistent."""


@dataclass(frozen=True)
class Hyperparams:
    """Desk-scale defaults; the reference fine-tuning settings for the full
    models live in PRESETS."""

    base_lr: float = 5e-4
    batch_size: int = 8
    warmup_frac: float = 0.1
    max_epochs: int = 50
    dropout: float = 0.1
    seed: int = 0
    max_seq_len: int = 64

    def __post_init__(self):
        if min(self.base_lr, self.batch_size, self.max_epochs, self.max_seq_len) <= 0:
            raise ValueError("base_lr, batch_size, max_epochs, max_seq_len must be positive")
        if not 0.0 <= self.warmup_frac <= 1.0:
            raise ValueError(f"warmup_frac must be in [0, 1], got {self.warmup_frac}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")


PRESETS = {
    "desk": Hyperparams(),
    "base-uncased": Hyperparams(base_lr=2e-5, batch_size=16, warmup_frac=0.5,
                                max_epochs=15, dropout=0.1, max_seq_len=128),
    "large-uncased": Hyperparams(base_lr=2e-5, batch_size=2, warmup_frac=0.7,
                                 max_epochs=15, dropout=0.1, max_seq_len=128),
}

@dataclass
class TrainExample:
    encoding: Encoding
    mask: np.ndarray
    label: int
    schema_id: str
    candidate_index: int


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    mean_loss: float
    accuracy: float


def derive_seed(master: int, label: str) -> int:
    """Fan a master seed out into a stable named sub-seed."""
    digest = hashlib.sha256(f"{master}/{label}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def make_training_examples(schemas: list[Schema], vocab: Vocab,
                           parses: dict[str, DepParse],
                           max_len: int) -> list[TrainExample]:
    """Two examples per schema in (schema id, candidate index) order.

    `parses` is keyed `<schema_id>/<candidate_index>` as in the sidecar
    format; the token-level mask is always built so any plan can train
    from the same example list.
    """
    examples: list[TrainExample] = []
    for schema in sorted(schemas, key=lambda s: s.id):
        pair = generate_candidates(schema)
        for sentence in pair:
            key = f"{schema.id}/{sentence.candidate_index}"
            parse = parses.get(key)
            if parse is None:
                raise SchemaError(f"schema {schema.id}: missing parse {key!r}")
            words = sentence.words
            if len(parse.words) != len(words):
                raise SchemaError(
                    f"schema {schema.id}: candidate {sentence.candidate_index} has "
                    f"{len(words)} words but its parse has {len(parse.words)}")
            encoding = encode_pair(list(sentence.seg_a), list(sentence.seg_b), vocab, max_len)
            mask = expand_to_subwords(build_word_mask(parse), encoding)
            label = IS_NEXT if sentence.candidate_index == schema.answer_index else NOT_NEXT
            examples.append(TrainExample(encoding=encoding, mask=mask, label=label,
                                         schema_id=schema.id,
                                         candidate_index=sentence.candidate_index))
    return examples


def _example_logits(example: TrainExample, params, config, plan,
                    train_mode=False, dropout_rng=None) -> nc.Tensor:
    mask = example.mask if plan.needs_mask() else None
    _, pooled = encoder_forward(example.encoding, mask, params, config, plan,
                                train_mode=train_mode, dropout_rng=dropout_rng)
    return nsp_logits(pooled, params)


def fine_tune(params: dict[str, nc.Tensor], examples: list[TrainExample],
              hyper: Hyperparams, plan: MaskPlan, config: EncoderConfig,
              weight_decay: float = 0.01) -> tuple[dict[str, nc.Tensor], list[EpochLog]]:
    """Run the fine-tuning loop in place; returns the params and per-epoch log.

    Shuffling and dropout draw from sub-seeds derived from hyper.seed, so
    identical seeds give bit-identical final parameters. The logged
    accuracy is an eval-mode pass over the training examples at epoch end.
    """
    if not examples:
        raise ValueError("fine_tune requires at least one example")
    if config.dropout_rate != hyper.dropout:
        config = replace(config, dropout_rate=hyper.dropout)
    n = len(examples)
    steps_per_epoch = math.ceil(n / hyper.batch_size)
    total_steps = hyper.max_epochs * steps_per_epoch
    state = nc.OptimState.for_params(params, hyper.base_lr, hyper.warmup_frac,
                                     total_steps, weight_decay=weight_decay)
    shuffle_rng = np.random.default_rng(derive_seed(hyper.seed, "shuffle"))
    dropout_rng = np.random.default_rng(derive_seed(hyper.seed, "dropout"))

    log: list[EpochLog] = []
    for epoch in range(hyper.max_epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, hyper.batch_size):
            batch = [examples[i] for i in order[start:start + hyper.batch_size]]
            nc.clear_grads(params)
            total = None
            for example in batch:
                logits = _example_logits(example, params, config, plan,
                                         train_mode=True, dropout_rng=dropout_rng)
                loss = nc.cross_entropy_logits(logits, [example.label])
                total = loss if total is None else nc.add(total, loss)
            batch_loss = nc.scale(total, 1.0 / len(batch))
            if not np.isfinite(batch_loss.data):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {state.step} "
                    f"(lr={hyper.base_lr}, batch={len(batch)})")
            grads = nc.backward(batch_loss, params)
            nc.adamw_step(params, grads, state)
            epoch_loss += float(batch_loss.data) * len(batch)
        correct = 0
        for example in examples:
            logits = _example_logits(example, params, config, plan)
            if int(np.argmax(logits.data[0])) == example.label:
                correct += 1
        log.append(EpochLog(epoch=epoch, mean_loss=epoch_loss / n, accuracy=correct / n))
    return params, log


def subsample(schemas: list[Schema], fraction: float, seed: int) -> list[Schema]:
    """Uniform sample without replacement of round(fraction * N) schemas,
    original order preserved."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    k = round(fraction * len(schemas))
    if k == len(schemas):
        return list(schemas)
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(schemas), size=k, replace=False))
    return [schemas[i] for i in chosen]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------
# Layout: magic "WMK1" | version u32 | payload-length u32 + JSON payload
# (config, plan, meta) | tensor count u32 | per tensor: name-length u16 +
# name + rank u8 + dims u32 each + row-major float32 data | crc32 u32.
# All integers little-endian; the CRC covers every preceding byte.

def checkpoint_bytes(params: dict[str, nc.Tensor], config: EncoderConfig,
                     plan: MaskPlan, meta: dict) -> bytes:
    payload = json.dumps(
        {"config": _config_dict(config), "plan": plan.to_dict(), "meta": meta},
        sort_keys=True, separators=(",", ":")).encode()
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<I", CHECKPOINT_VERSION)
    buf += struct.pack("<I", len(payload))
    buf += payload
    buf += struct.pack("<I", len(params))
    for name, p in params.items():
        encoded = name.encode()
        arr = np.ascontiguousarray(p.data, dtype=np.float32)
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        buf += struct.pack("<B", arr.ndim)
        for extent in arr.shape:
            buf += struct.pack("<I", extent)
        buf += arr.tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    return bytes(buf)


def save_checkpoint(params: dict[str, nc.Tensor], config: EncoderConfig,
                    plan: MaskPlan, meta: dict, path) -> None:
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(params, config, plan, meta))


def load_checkpoint(path) -> tuple[dict[str, nc.Tensor], EncoderConfig, MaskPlan, dict]:
    with open(path, "rb") as f:
        blob = f.read()
    return parse_checkpoint(blob)


def parse_checkpoint(blob: bytes) -> tuple[dict[str, nc.Tensor], EncoderConfig, MaskPlan, dict]:
    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise CheckpointError(f"truncated checkpoint at byte offset {offset}")
        chunk = blob[offset:offset + n]
        offset += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic at byte offset 0")
    version = struct.unpack("<I", take(4))[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} at byte offset 4")
    payload_len = struct.unpack("<I", take(4))[0]
    payload_start = offset
    try:
        payload = json.loads(take(payload_len).decode())
        config = EncoderConfig(**payload["config"])
        plan = MaskPlan.from_dict(payload["plan"])
    except CheckpointError:
        raise
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupt payload at byte offset {payload_start}: {e}") from e
    count = struct.unpack("<I", take(4))[0]
    params: dict[str, nc.Tensor] = {}
    for _ in range(count):
        name_len = struct.unpack("<H", take(2))[0]
        name = take(name_len).decode()
        rank = struct.unpack("<B", take(1))[0]
        dims = tuple(struct.unpack("<I", take(4))[0] for _ in range(rank))
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims).copy()
        if name in params:
            raise CheckpointError(f"duplicate tensor {name!r}")
        params[name] = nc.Tensor(data, requires_grad=True)
    stored_crc = struct.unpack("<I", take(4))[0]
    if offset != len(blob):
        raise CheckpointError(f"trailing bytes at offset {offset}")
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CheckpointError("checksum mismatch")

    expected = param_shapes(config, plan.kind)
    for name, shape in expected.items():
        if name not in params:
            raise CheckpointError(f"missing tensor {name!r}")
        if params[name].data.shape != shape:
            raise CheckpointError(
                f"tensor {name!r} has dims {params[name].data.shape}, config expects {shape}")
    for name in params:
        if name not in expected:
            raise CheckpointError(f"unexpected tensor {name!r}")
    return params, config, plan, payload["meta"]


def _config_dict(config: EncoderConfig) -> dict:
    return {
        "vocab_size": config.vocab_size,
        "num_layers": config.num_layers,
        "num_heads": config.num_heads,
        "hidden_size": config.hidden_size,
        "ff_size": config.ff_size,
        "max_positions": config.max_positions,
        "segment_types": config.segment_types,
        "dropout_rate": config.dropout_rate,
        "scale_mode": config.scale_mode,
        "mask_mode": config.mask_mode,
    }


def config_digest(config: EncoderConfig, plan: MaskPlan) -> str:
    blob = json.dumps({"config": _config_dict(config), "plan": plan.to_dict()},
                      sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def file_digest(path) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()
