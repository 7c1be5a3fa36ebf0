"""Command-line surface: train, eval, mask, curve, tokenize, overlap-check.

Configuration is a flat JSON key set; every flag overrides its config key,
and the fully resolved configuration is embedded in each output for
provenance. One master seed fans out into named sub-seeds (init, dropout,
shuffle, subsample) so components can be varied independently.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import numcore as nc
from .depmask import (
    build_word_mask,
    expand_to_subwords,
    load_parse_sidecar,
    render_mask,
)
from .encoder import EncoderConfig, MaskPlan, init_params
from .evaluator import evaluate, render_report, size_curve
from .schema import ModelBundle, generate_candidates, load_schemas
from .tokenizer import encode_pair, load_vocab, word_tokenize, wordpiece
from .trainer import (
    PRESETS,
    Hyperparams,
    config_digest,
    derive_seed,
    file_digest,
    fine_tune,
    load_checkpoint,
    make_training_examples,
    save_checkpoint,
)

CONFIG_KEYS = {
    # encoder shape
    "num_layers": 2, "num_heads": 2, "hidden_size": 32, "ff_size": 64,
    "max_positions": 64, "dropout": 0.1, "scale": "sqrt_dk", "mask_mode": "additive",
    # mask plan
    "plan": "none", "layers": "last:1", "t": 3,
    # fine-tuning
    "preset": None, "lr": 5e-4, "batch_size": 8, "warmup_frac": 0.1,
    "epochs": 50, "max_seq_len": 64,
    # reproducibility
    "seed": 0,
    # paths
    "vocab": None, "corpus": None, "parses": None,
    "eval_corpus": None, "eval_parses": None,
    "checkpoint": None, "out": ".",
}

_LAYERS_RANGE = re.compile(r"^(first|middle|last):(\d+)$")


class CliError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def path(self, key: str, required: bool = True) -> Path | None:
        value = self.values.get(key)
        if value is None:
            if required:
                raise CliError(f"config key {key!r} is required for this command")
            return None
        p = Path(value)
        if not p.exists():
            raise CliError(f"{key}: path does not exist: {p}")
        return p

    def out_path(self, name: str) -> Path:
        out = Path(self.values["out"])
        out.mkdir(parents=True, exist_ok=True)
        return out / name

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            vocab_size=vocab_size,
            num_layers=self.values["num_layers"],
            num_heads=self.values["num_heads"],
            hidden_size=self.values["hidden_size"],
            ff_size=self.values["ff_size"],
            max_positions=self.values["max_positions"],
            dropout_rate=self.values["dropout"],
            scale_mode=self.values["scale"],
            mask_mode=self.values["mask_mode"],
        )

    def mask_plan(self) -> MaskPlan:
        kind = self.values["plan"]
        if kind == "none":
            return MaskPlan.none()
        if kind == "outside":
            return MaskPlan.outside(self.values["t"])
        if kind == "inside":
            layers = str(self.values["layers"])
            m = _LAYERS_RANGE.match(layers)
            if m:
                return MaskPlan.inside_range(m.group(1), int(m.group(2)),
                                             self.values["num_layers"])
            try:
                indices = [int(x) for x in layers.split(",") if x.strip()]
            except ValueError:
                raise CliError(f"bad --layers value {layers!r}: expected POS:T or a comma list")
            return MaskPlan.inside(indices)
        raise CliError(f"unknown plan kind {kind!r}")

    def hyperparams(self) -> Hyperparams:
        preset = self.values.get("preset")
        if preset is not None:
            if preset not in PRESETS:
                raise CliError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
            base = PRESETS[preset]
            return Hyperparams(base_lr=base.base_lr, batch_size=base.batch_size,
                               warmup_frac=base.warmup_frac, max_epochs=base.max_epochs,
                               dropout=base.dropout, seed=self.values["seed"],
                               max_seq_len=base.max_seq_len)
        return Hyperparams(base_lr=self.values["lr"], batch_size=self.values["batch_size"],
                           warmup_frac=self.values["warmup_frac"],
                           max_epochs=self.values["epochs"], dropout=self.values["dropout"],
                           seed=self.values["seed"], max_seq_len=self.values["max_seq_len"])


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = dict(CONFIG_KEYS)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise CliError(f"config file not found: {path}")
        loaded = json.loads(path.read_text(encoding="utf-8"))
        unknown = set(loaded) - set(CONFIG_KEYS)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    overrides = {
        "seed": getattr(args, "seed", None),
        "plan": getattr(args, "plan", None),
        "mask_mode": getattr(args, "mask_mode", None),
        "layers": getattr(args, "layers", None),
        "out": getattr(args, "out", None),
        "vocab": getattr(args, "vocab", None),
        "corpus": getattr(args, "corpus", None),
        "parses": getattr(args, "parses", None),
        "checkpoint": getattr(args, "checkpoint", None),
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(values=values)


def _load_inputs(run: RunConfig):
    vocab = load_vocab(run.path("vocab"))
    schemas = load_schemas(run.path("corpus"))
    parses = load_parse_sidecar(run.path("parses"))
    return vocab, schemas, parses


def cmd_train(args) -> int:
    run = resolve_config(args)
    vocab, schemas, parses = _load_inputs(run)
    config = run.encoder_config(len(vocab))
    plan = run.mask_plan()
    plan.validate(config.num_layers)
    hyper = run.hyperparams()
    examples = make_training_examples(schemas, vocab, parses, hyper.max_seq_len)
    params = init_params(config, plan, derive_seed(run["seed"], "init"))
    params, log = fine_tune(params, examples, hyper, plan, config)
    digest = config_digest(config, plan)
    meta = {
        "step": hyper.max_epochs * -(-len(examples) // hyper.batch_size),
        "seed": run["seed"],
        "corpus_digest": file_digest(run.path("corpus")),
        "config_digest": digest,
    }
    ckpt_path = run.out_path(run.values.get("checkpoint") or "model.wmk")
    save_checkpoint(params, config, plan, meta, ckpt_path)
    log_path = run.out_path("train_log.jsonl")
    with open(log_path, "w", encoding="utf-8") as f:
        for entry in log:
            f.write(json.dumps({"epoch": entry.epoch, "loss": entry.mean_loss,
                                "accuracy": entry.accuracy, "config_digest": digest}) + "\n")
    print(json.dumps({"config": run.values, "config_digest": digest,
                      "checkpoint": str(ckpt_path), "train_log": str(log_path),
                      "final_accuracy": log[-1].accuracy}, default=str))
    return 0


def cmd_eval(args) -> int:
    run = resolve_config(args)
    ckpt_path = run.path("checkpoint")
    params, config, plan, meta = load_checkpoint(ckpt_path)
    vocab = load_vocab(run.path("vocab"))
    if len(vocab) != config.vocab_size:
        raise CliError(f"vocab has {len(vocab)} pieces but checkpoint expects {config.vocab_size}")
    corpus_key = "eval_corpus" if run.values.get("eval_corpus") else "corpus"
    parses_key = "eval_parses" if run.values.get("eval_parses") else "parses"
    schemas = load_schemas(run.path(corpus_key))
    parses = load_parse_sidecar(run.path(parses_key))
    bundle = ModelBundle(params=params, config=config, plan=plan, vocab=vocab,
                         max_len=run.values["max_seq_len"])
    report = evaluate(bundle, schemas, parses, checkpoint_digest=file_digest(ckpt_path))
    payload = report.to_dict()
    payload["config"] = run.values
    run.out_path("report.json").write_text(
        json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8")
    text = render_report(report)
    run.out_path("report.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_mask(args) -> int:
    run = resolve_config(args)
    vocab, schemas, parses = _load_inputs(run)
    matching = [s for s in schemas if s.id == args.schema_id]
    if not matching:
        raise CliError(f"unknown schema id {args.schema_id!r}")
    schema = matching[0]
    pair = generate_candidates(schema)
    sentence = list(pair)[args.candidate]
    parse = parses.get(f"{schema.id}/{args.candidate}")
    if parse is None:
        raise CliError(f"missing parse {schema.id}/{args.candidate}")
    word_mask = build_word_mask(parse)
    encoding = encode_pair(list(sentence.seg_a), list(sentence.seg_b), vocab,
                           run.values["max_seq_len"])
    token_mask = expand_to_subwords(word_mask, encoding)
    print(f"schema {schema.id} candidate {args.candidate}: {' '.join(sentence.words)}")
    print("word-level mask:")
    print(render_mask(word_mask, list(parse.words)))
    print("token-level mask:")
    print(render_mask(token_mask, encoding.pieces))
    return 0


def cmd_curve(args) -> int:
    run = resolve_config(args)
    try:
        fractions = [float(x) for x in args.fractions.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"bad fractions {args.fractions!r}: expected comma-separated numbers")
    if not fractions or any(not 0.0 <= f <= 1.0 for f in fractions):
        raise CliError(f"fractions must lie in [0, 1], got {args.fractions!r}")
    vocab, schemas, parses = _load_inputs(run)
    config = run.encoder_config(len(vocab))
    plan = run.mask_plan()
    plan.validate(config.num_layers)
    hyper = run.hyperparams()
    init = init_params(config, plan, derive_seed(run["seed"], "init"))
    eval_schemas = eval_parses = None
    if run.values.get("eval_corpus"):
        eval_schemas = load_schemas(run.path("eval_corpus"))
        eval_parses = load_parse_sidecar(run.path("eval_parses"))
    rows = size_curve(config, plan, vocab, init, schemas, parses, fractions,
                      derive_seed(run["seed"], "subsample"), hyper,
                      eval_schemas=eval_schemas, eval_parses=eval_parses)
    digest = config_digest(config, plan)
    table = [{"fraction": fraction, "config_digest": digest, **report.to_dict()}
             for fraction, report in rows]
    out = run.out_path("curve.json")
    out.write_text(json.dumps({"config": run.values, "rows": table},
                              indent=2, default=str) + "\n", encoding="utf-8")
    for fraction, report in rows:
        full = report.metrics["full"]
        print(f"fraction {fraction:.2f}: full {full.render()} ({full.correct}/{full.total})")
    return 0


def cmd_tokenize(args) -> int:
    run = resolve_config(args)
    vocab = load_vocab(run.path("vocab"))
    words = word_tokenize(args.text)
    for word, span in words:
        pieces = wordpiece(word, vocab)
        ids = [vocab.id(p) for p in pieces]
        print(f"{word}\t{span[0]}:{span[1]}\t{' '.join(pieces)}\t{' '.join(map(str, ids))}")
    return 0


def cmd_overlap_check(args) -> int:
    from .schema import overlap_report

    first = load_schemas(Path(args.corpus_a))
    second = load_schemas(Path(args.corpus_b))
    matches = overlap_report(first, second)
    print(f"{len(matches)} overlapping word sequence(s)")
    for a, b in matches:
        print(f"{a}\t{b}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="winomask",
        description="Dependency-masked encoder harness for Winograd schema resolution")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (flat key set)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--plan", choices=["none", "inside", "outside"], help="mask plan kind")
        p.add_argument("--mask-mode", dest="mask_mode",
                       choices=["additive", "multiplicative"], help="mask combination mode")
        p.add_argument("--layers", help="inside range POS:T (first|middle|last) or comma list")
        p.add_argument("--out", help="output directory")
        p.add_argument("--vocab", help="vocabulary file")
        p.add_argument("--corpus", help="schema corpus (JSON lines)")
        p.add_argument("--parses", help="CoNLL-U parse sidecar")
        p.add_argument("--checkpoint", help="checkpoint path")

    p_train = sub.add_parser("train", help="fine-tune a model on a schema corpus")
    common(p_train)
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint under all protocols")
    common(p_eval)
    p_eval.set_defaults(fn=cmd_eval)

    p_mask = sub.add_parser("mask", help="render word- and token-level masks for a schema")
    common(p_mask)
    p_mask.add_argument("schema_id")
    p_mask.add_argument("--candidate", type=int, choices=[0, 1], default=0)
    p_mask.set_defaults(fn=cmd_mask)

    p_curve = sub.add_parser("curve", help="accuracy vs training-data fraction")
    common(p_curve)
    p_curve.add_argument("fractions", help="comma-separated fractions in [0, 1]")
    p_curve.set_defaults(fn=cmd_curve)

    p_tok = sub.add_parser("tokenize", help="debug-tokenize a text")
    common(p_tok)
    p_tok.add_argument("text")
    p_tok.set_defaults(fn=cmd_tokenize)

    p_overlap = sub.add_parser("overlap-check", help="report exact word-sequence overlaps")
    p_overlap.add_argument("corpus_a")
    p_overlap.add_argument("corpus_b")
    p_overlap.set_defaults(fn=cmd_overlap_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as e:
        print(f"winomask: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
