"""Winograd-schema data model, candidate generation, and model-based resolution.

A schema is resolved by substituting each candidate antecedent for the
pronoun, encoding the sentence as a [CLS] prefix [SEP] candidate+rest [SEP]
pair, and scoring both variants with the next-sentence head; the higher
IsNext probability wins, with ties broken toward candidate 0.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from . import numcore as nc
from .depmask import DepParse, build_word_mask, expand_to_subwords
from .encoder import EncoderConfig, MaskPlan, encoder_forward, nsp_probability
from .tokenizer import Vocab, encode_pair, words_of

logger = logging.getLogger(__name__)

TIE_EPS = 1e-9

_CORPUS_KEYS = ("id", "words", "pronoun_span", "candidates", "answer_index",
                "associative", "switchable", "switch_group", "switched")


class SchemaError(ValueError):
    """A schema violates its invariants."""


class CorpusError(ValueError):
    """A corpus file is malformed."""


@dataclass(frozen=True)
class Schema:
    """One Winograd problem: a sentence, a marked pronoun, two candidates."""

    id: str
    words: tuple[str, ...]
    pronoun_span: tuple[int, int]      # [start, end) word indices
    candidates: tuple[str, str]
    answer_index: int
    associative: bool = False
    switchable: bool = False
    switch_group: str | None = None
    switched: bool = False

    def __post_init__(self):
        start, end = self.pronoun_span
        if not (0 <= start < end <= len(self.words)):
            raise SchemaError(f"schema {self.id}: pronoun span {self.pronoun_span} out of bounds")
        if len(self.candidates) != 2:
            raise SchemaError(f"schema {self.id}: expected exactly 2 candidates")
        if not all(words_of(c) for c in self.candidates):
            raise SchemaError(f"schema {self.id}: empty candidate")
        if words_of(self.candidates[0]) == words_of(self.candidates[1]):
            raise SchemaError(f"schema {self.id}: candidates are not distinct")
        if self.answer_index not in (0, 1):
            raise SchemaError(f"schema {self.id}: answer_index must be 0 or 1")
        if self.switchable != (self.switch_group is not None):
            raise SchemaError(f"schema {self.id}: switch_group must be present iff switchable")


@dataclass(frozen=True)
class CandidateSentence:
    """One pronoun substitution, split into the two NSP segments."""

    seg_a: tuple[str, ...]    # words before the pronoun
    seg_b: tuple[str, ...]    # candidate words + words after the pronoun
    candidate_index: int

    @property
    def words(self) -> tuple[str, ...]:
        return self.seg_a + self.seg_b


@dataclass(frozen=True)
class CandidatePair:
    first: CandidateSentence
    second: CandidateSentence

    def __iter__(self):
        return iter((self.first, self.second))


@dataclass(frozen=True)
class Prediction:
    schema_id: str
    scores: tuple[float, float]
    predicted_index: int
    tie: bool
    correct: bool


def load_schemas(path) -> list[Schema]:
    """Read a JSON-lines schema corpus, validating invariants and id uniqueness."""
    schemas: list[Schema] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}: line {lineno}: invalid JSON ({e})") from e
            missing = [k for k in _CORPUS_KEYS if k not in obj]
            if missing:
                raise CorpusError(f"{path}: line {lineno}: missing keys {missing}")
            schema = Schema(
                id=str(obj["id"]),
                words=tuple(obj["words"]),
                pronoun_span=tuple(obj["pronoun_span"]),
                candidates=tuple(obj["candidates"]),
                answer_index=int(obj["answer_index"]),
                associative=bool(obj["associative"]),
                switchable=bool(obj["switchable"]),
                switch_group=obj["switch_group"],
                switched=bool(obj["switched"]),
            )
            if schema.id in seen:
                raise CorpusError(f"{path}: line {lineno}: duplicate schema id {schema.id!r}")
            seen.add(schema.id)
            schemas.append(schema)
    return schemas


def overlap_report(first: list[Schema], second: list[Schema]) -> list[tuple[str, str]]:
    """Pairs of schema ids across two corpora whose word sequences match exactly."""
    lowered: dict[tuple[str, ...], list[str]] = {}
    for s in first:
        lowered.setdefault(tuple(w.lower() for w in s.words), []).append(s.id)
    matches: list[tuple[str, str]] = []
    for s in second:
        for other in lowered.get(tuple(w.lower() for w in s.words), ()):
            matches.append((other, s.id))
    return matches


def generate_candidates(schema: Schema) -> CandidatePair:
    """Substitute each candidate for the pronoun and split at the substitution."""
    start, end = schema.pronoun_span
    seg_a = tuple(w.lower() for w in schema.words[:start])
    rest = tuple(w.lower() for w in schema.words[end:])
    if start == 0:
        logger.warning("schema %s: pronoun at sentence start yields an empty first segment", schema.id)
    sentences = []
    for idx, candidate in enumerate(schema.candidates):
        seg_b = tuple(words_of(candidate)) + rest
        sentences.append(CandidateSentence(seg_a=seg_a, seg_b=seg_b, candidate_index=idx))
    return CandidatePair(first=sentences[0], second=sentences[1])


@dataclass
class ModelBundle:
    """Everything needed to score a schema."""

    params: dict[str, nc.Tensor]
    config: EncoderConfig
    plan: MaskPlan
    vocab: Vocab
    max_len: int = 0

    def __post_init__(self):
        if self.max_len <= 0:
            self.max_len = self.config.max_positions


def resolve(bundle: ModelBundle, schema: Schema,
            parses: tuple[DepParse, DepParse]) -> Prediction:
    """Score both candidate sentences and pick the more probable one.

    Each candidate sentence carries its own dependency parse; the parse is
    validated against the substituted word sequence before masking.
    """
    pair = generate_candidates(schema)
    scores = []
    for sentence, parse in zip(pair, parses):
        words = sentence.words
        if len(parse.words) != len(words):
            raise SchemaError(
                f"schema {schema.id}: candidate {sentence.candidate_index} has "
                f"{len(words)} words but its parse has {len(parse.words)}")
        if tuple(w.lower() for w in parse.words) != words:
            raise SchemaError(
                f"schema {schema.id}: candidate {sentence.candidate_index} words "
                f"do not match the sidecar parse")
        encoding = encode_pair(list(sentence.seg_a), list(sentence.seg_b),
                               bundle.vocab, bundle.max_len)
        mask = None
        if bundle.plan.needs_mask():
            mask = expand_to_subwords(build_word_mask(parse), encoding)
        _, pooled = encoder_forward(encoding, mask, bundle.params, bundle.config,
                                    bundle.plan, train_mode=False)
        scores.append(nsp_probability(pooled, bundle.params))
    tie = abs(scores[0] - scores[1]) <= TIE_EPS
    predicted = 0 if tie or scores[0] >= scores[1] else 1
    return Prediction(schema_id=schema.id, scores=(scores[0], scores[1]),
                      predicted_index=predicted, tie=tie,
                      correct=predicted == schema.answer_index)
