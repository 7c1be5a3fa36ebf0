"""Evaluation protocols: full accuracy, associative/non-associative split,
switchable unswitched/switched accuracy, and consistent accuracy.

The full set is the unswitched schemas; switched variants are scored
separately and enter only the switched and consistent metrics. Consistent
accuracy counts switch groups where both members are answered correctly,
over the number of groups. Accuracies over empty sets are reported as
undefined (None), never as 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from . import numcore as nc
from .depmask import DepParse
from .encoder import EncoderConfig, MaskPlan
from .schema import ModelBundle, Prediction, Schema, resolve
from .tokenizer import Vocab
from .trainer import Hyperparams, config_digest, fine_tune, make_training_examples, subsample

METRIC_NAMES = ("full", "associative", "non_associative", "unswitched", "switched", "consistent")


class CoverageError(ValueError):
    """A filtered schema has no prediction."""


class PairingError(ValueError):
    """A switch group is not exactly one original plus one switched schema."""


@dataclass(frozen=True)
class MetricResult:
    accuracy: float | None
    correct: int
    total: int

    def render(self) -> str:
        if self.accuracy is None:
            return "n/a"
        return f"{100.0 * self.accuracy:.1f}%"


@dataclass
class Report:
    metrics: dict[str, MetricResult]
    predictions: list[Prediction]
    ties: int
    config_digest: str
    checkpoint_digest: str | None = None

    def to_dict(self) -> dict:
        return {
            "metrics": {name: {"accuracy": m.accuracy, "correct": m.correct, "total": m.total}
                        for name, m in self.metrics.items()},
            "ties": self.ties,
            "config_digest": self.config_digest,
            "checkpoint_digest": self.checkpoint_digest,
            "predictions": [{"id": p.schema_id, "scores": list(p.scores),
                             "predicted_index": p.predicted_index, "tie": p.tie,
                             "correct": p.correct}
                            for p in self.predictions],
        }


def accuracy(predictions: dict[str, Prediction], schemas: list[Schema],
             keep: Callable[[Schema], bool]) -> MetricResult:
    """Correct/total over the schemas passing the filter."""
    correct = 0
    total = 0
    for schema in schemas:
        if not keep(schema):
            continue
        prediction = predictions.get(schema.id)
        if prediction is None:
            raise CoverageError(f"no prediction for schema {schema.id}")
        total += 1
        correct += int(prediction.correct)
    return MetricResult(accuracy=correct / total if total else None,
                        correct=correct, total=total)


def consistent_accuracy(predictions: dict[str, Prediction],
                        schemas: list[Schema]) -> MetricResult:
    """Fraction of switch groups with both members answered correctly."""
    groups: dict[str, dict[bool, Schema]] = {}
    for schema in schemas:
        if not schema.switchable:
            continue
        slot = groups.setdefault(schema.switch_group, {})
        if schema.switched in slot:
            raise PairingError(f"switch group {schema.switch_group!r} has duplicate "
                               f"{'switched' if schema.switched else 'original'} member")
        slot[schema.switched] = schema
    both_correct = 0
    for group_id, members in sorted(groups.items()):
        if set(members) != {False, True}:
            raise PairingError(f"switch group {group_id!r} is unpaired")
        flags = []
        for schema in members.values():
            prediction = predictions.get(schema.id)
            if prediction is None:
                raise CoverageError(f"no prediction for schema {schema.id}")
            flags.append(prediction.correct)
        both_correct += int(all(flags))
    total = len(groups)
    return MetricResult(accuracy=both_correct / total if total else None,
                        correct=both_correct, total=total)


def build_report(predictions: dict[str, Prediction], schemas: list[Schema],
                 digest: str, checkpoint_digest: str | None = None) -> Report:
    metrics = {
        "full": accuracy(predictions, schemas, lambda s: not s.switched),
        "associative": accuracy(predictions, schemas, lambda s: not s.switched and s.associative),
        "non_associative": accuracy(predictions, schemas, lambda s: not s.switched and not s.associative),
        "unswitched": accuracy(predictions, schemas, lambda s: s.switchable and not s.switched),
        "switched": accuracy(predictions, schemas, lambda s: s.switched),
        "consistent": consistent_accuracy(predictions, schemas),
    }
    ordered = [predictions[s.id] for s in sorted(schemas, key=lambda s: s.id)]
    return Report(metrics=metrics, predictions=ordered,
                  ties=sum(p.tie for p in ordered),
                  config_digest=digest, checkpoint_digest=checkpoint_digest)


def evaluate(bundle: ModelBundle, schemas: list[Schema],
             parses: dict[str, DepParse],
             checkpoint_digest: str | None = None) -> Report:
    """Resolve every schema and aggregate all six protocol metrics."""
    predictions: dict[str, Prediction] = {}
    for schema in sorted(schemas, key=lambda s: s.id):
        pair_parses = []
        for idx in (0, 1):
            parse = parses.get(f"{schema.id}/{idx}")
            if parse is None:
                raise CoverageError(f"missing parse {schema.id}/{idx}")
            pair_parses.append(parse)
        predictions[schema.id] = resolve(bundle, schema, tuple(pair_parses))
    return build_report(predictions, schemas,
                        config_digest(bundle.config, bundle.plan), checkpoint_digest)


def size_curve(config: EncoderConfig, plan: MaskPlan, vocab: Vocab,
               init_params: dict, schemas: list[Schema], parses: dict[str, DepParse],
               fractions: list[float], seed: int, hyper: Hyperparams,
               eval_schemas: list[Schema] | None = None,
               eval_parses: dict[str, DepParse] | None = None
               ) -> list[tuple[float, Report]]:
    """Retrain from the same initial parameters on growing corpus fractions.

    Each fraction subsamples the training corpus with the given seed,
    fine-tunes a copy of init_params, and evaluates (on the training
    corpus unless a separate evaluation corpus is given).
    """
    for fraction in fractions:
        if not 0.0 <= fraction <= 1.0 or math.isnan(fraction):
            raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    eval_schemas = schemas if eval_schemas is None else eval_schemas
    eval_parses = parses if eval_parses is None else eval_parses
    rows: list[tuple[float, Report]] = []
    for fraction in fractions:
        params = {name: nc.Tensor(p.data.copy(), requires_grad=True)
                  for name, p in init_params.items()}
        subset = subsample(schemas, fraction, seed)
        if subset:
            examples = make_training_examples(subset, vocab, parses, hyper.max_seq_len)
            params, _ = fine_tune(params, examples, hyper, plan, config)
        bundle = ModelBundle(params=params, config=config, plan=plan,
                             vocab=vocab, max_len=hyper.max_seq_len)
        rows.append((fraction, evaluate(bundle, eval_schemas, eval_parses)))
    return rows


def render_report(report: Report) -> str:
    """Aligned plain-text table over the six protocol columns."""
    headers = ("Full", "Associative", "Non-Assoc", "Unswitched", "Switched", "Consistent")
    counts = tuple(f"(#{report.metrics[name].total})" for name in METRIC_NAMES)
    values = tuple(report.metrics[name].render() for name in METRIC_NAMES)
    widths = [max(len(h), len(c), len(v)) for h, c, v in zip(headers, counts, values)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join(c.ljust(w) for c, w in zip(counts, widths)),
        "  ".join(v.ljust(w) for v, w in zip(values, widths)),
        f"ties: {report.ties}",
        f"config: {report.config_digest[:12]}",
    ]
    if report.checkpoint_digest:
        lines.append(f"checkpoint: {report.checkpoint_digest[:12]}")
    return "\n".join(lines)
