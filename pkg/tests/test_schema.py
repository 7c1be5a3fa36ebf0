import json

import numpy as np
import pytest

from conftest import tiny_model
from winomask.encoder import MaskPlan
from winomask.schema import (
    CorpusError,
    ModelBundle,
    Schema,
    SchemaError,
    generate_candidates,
    load_schemas,
    overlap_report,
    resolve,
)
from winomask.trainer import Hyperparams, fine_tune, make_training_examples

TROPHY_SEG_A = ("the", "trophy", "doesn", "'", "t", "fit", "into", "the",
                "brown", "suitcase", "because")


def schema_dict(**overrides):
    base = {
        "id": "s1",
        "words": ["the", "dog", "saw", "the", "cat", "because", "it", "barked", "."],
        "pronoun_span": [6, 7],
        "candidates": ["the dog", "the cat"],
        "answer_index": 0,
        "associative": False,
        "switchable": False,
        "switch_group": None,
        "switched": False,
    }
    base.update(overrides)
    return base


def write_corpus(tmp_path, rows, name="c.jsonl"):
    path = tmp_path / name
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return path


class TestLoadSchemas:
    def test_trophy_fixture(self, fixture_schemas):
        (trophy,) = [s for s in fixture_schemas if s.id == "trophy1"]
        assert trophy.candidates == ("the trophy", "the brown suitcase")
        assert trophy.answer_index == 0
        assert trophy.words[trophy.pronoun_span[0]] == "it"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_schemas(path) == []

    def test_duplicate_id(self, tmp_path):
        path = write_corpus(tmp_path, [schema_dict(), schema_dict()])
        with pytest.raises(CorpusError, match="duplicate schema id"):
            load_schemas(path)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(schema_dict()) + "\n{not json\n")
        with pytest.raises(CorpusError, match="line 2"):
            load_schemas(path)

    def test_missing_key_reports_line(self, tmp_path):
        row = schema_dict()
        del row["answer_index"]
        path = write_corpus(tmp_path, [row])
        with pytest.raises(CorpusError, match="answer_index"):
            load_schemas(path)


class TestSchemaInvariants:
    def test_span_out_of_bounds(self):
        with pytest.raises(SchemaError, match="span"):
            Schema(**{**schema_dict(), "pronoun_span": (6, 20),
                      "words": tuple(schema_dict()["words"]),
                      "candidates": ("a", "b")})

    def test_identical_candidates_unreachable(self):
        with pytest.raises(SchemaError, match="distinct"):
            Schema(id="x", words=("a", "saw", "it"), pronoun_span=(2, 3),
                   candidates=("the dog", "the  dog"), answer_index=0)

    def test_switch_group_iff_switchable(self):
        with pytest.raises(SchemaError, match="switch_group"):
            Schema(id="x", words=("a", "saw", "it"), pronoun_span=(2, 3),
                   candidates=("a", "b"), answer_index=0, switchable=True)
        with pytest.raises(SchemaError, match="switch_group"):
            Schema(id="x", words=("a", "saw", "it"), pronoun_span=(2, 3),
                   candidates=("a", "b"), answer_index=0, switch_group="g")

    def test_answer_index_binary(self):
        with pytest.raises(SchemaError, match="answer_index"):
            Schema(id="x", words=("a", "saw", "it"), pronoun_span=(2, 3),
                   candidates=("a", "b"), answer_index=2)


class TestGenerateCandidates:
    def test_trophy_reproduces_candidate_layouts(self, fixture_schemas):
        (trophy,) = [s for s in fixture_schemas if s.id == "trophy1"]
        pair = generate_candidates(trophy)
        assert pair.first.seg_a == TROPHY_SEG_A
        assert pair.first.seg_b == ("the", "trophy", "is", "too", "large", ".")
        assert pair.second.seg_a == TROPHY_SEG_A
        assert pair.second.seg_b == ("the", "brown", "suitcase", "is", "too", "large", ".")

    def test_pronoun_at_start(self):
        schema = Schema(id="x", words=("it", "barked", "."), pronoun_span=(0, 1),
                        candidates=("the dog", "the cat"), answer_index=0)
        pair = generate_candidates(schema)
        assert pair.first.seg_a == ()
        assert pair.first.seg_b == ("the", "dog", "barked", ".")

    def test_substituting_pronoun_reconstructs_original(self):
        words = ("the", "dog", "saw", "it", ".")
        schema = Schema(id="x", words=words, pronoun_span=(3, 4),
                        candidates=("it", "them"), answer_index=0)
        pair = generate_candidates(schema)
        assert pair.first.words == words

    def test_members_differ_only_in_candidate_span(self):
        rng = np.random.default_rng(13)
        nouns = ["dog", "cat", "ball", "table", "boy", "girl"]
        for _ in range(30):
            i, j = rng.choice(len(nouns), size=2, replace=False)
            k = int(rng.integers(1, 4))
            words = tuple(nouns[x] for x in rng.integers(0, len(nouns), 3)) + ("it",) + \
                tuple(nouns[x] for x in rng.integers(0, len(nouns), 2))
            schema = Schema(id="x", words=words, pronoun_span=(3, 4),
                            candidates=(" ".join([nouns[i]] * k), nouns[j]),
                            answer_index=0)
            pair = generate_candidates(schema)
            assert pair.first.seg_a == pair.second.seg_a
            n_first = len(pair.first.seg_b) - (len(words) - 4)
            n_second = len(pair.second.seg_b) - (len(words) - 4)
            assert pair.first.seg_b[n_first:] == pair.second.seg_b[n_second:]


class TestOverlap:
    def test_exact_word_sequence_match(self, tmp_path):
        a = write_corpus(tmp_path, [schema_dict(id="a1")], "a.jsonl")
        b = write_corpus(tmp_path, [schema_dict(id="b1"),
                                    schema_dict(id="b2", words=["other", "words", "it"],
                                                pronoun_span=[2, 3])], "b.jsonl")
        matches = overlap_report(load_schemas(a), load_schemas(b))
        assert matches == [("a1", "b1")]


class TestResolve:
    def test_zero_classifier_ties_toward_candidate_0(self, vocab, fixture_schemas, fixture_parses):
        config, plan, params = tiny_model(len(vocab), seed=1)
        params["cls.w"].data[:] = 0.0
        params["cls.b"].data[:] = 0.0
        bundle = ModelBundle(params=params, config=config, plan=plan, vocab=vocab)
        (trophy,) = [s for s in fixture_schemas if s.id == "trophy1"]
        parses = (fixture_parses["trophy1/0"], fixture_parses["trophy1/1"])
        prediction = resolve(bundle, trophy, parses)
        assert prediction.scores == (0.5, 0.5)
        assert prediction.tie
        assert prediction.predicted_index == 0
        assert prediction.correct  # trophy answer is candidate 0

    def test_candidate_order_permutation_flips_prediction(self, vocab, fixture_schemas, fixture_parses):
        plan = MaskPlan.inside([0, 1])
        config, _, params = tiny_model(len(vocab), seed=2, plan=plan)
        # widen the classifier so the two candidate scores are separated by
        # more than float32 resolution (a fresh tiny init ties at 0.5)
        params["cls.w"].data *= 50.0
        bundle = ModelBundle(params=params, config=config, plan=plan, vocab=vocab)
        (trophy,) = [s for s in fixture_schemas if s.id == "trophy1"]
        swapped = Schema(id=trophy.id, words=trophy.words, pronoun_span=trophy.pronoun_span,
                         candidates=(trophy.candidates[1], trophy.candidates[0]),
                         answer_index=1 - trophy.answer_index)
        parses = (fixture_parses["trophy1/0"], fixture_parses["trophy1/1"])
        p = resolve(bundle, trophy, parses)
        q = resolve(bundle, swapped, (parses[1], parses[0]))
        assert p.scores == (q.scores[1], q.scores[0])
        assert not p.tie
        assert q.predicted_index == 1 - p.predicted_index
        assert p.correct == q.correct

    def test_parse_word_count_mismatch_names_schema(self, vocab, fixture_schemas, fixture_parses):
        config, plan, params = tiny_model(len(vocab), seed=3)
        bundle = ModelBundle(params=params, config=config, plan=plan, vocab=vocab)
        (trophy,) = [s for s in fixture_schemas if s.id == "trophy1"]
        wrong = (fixture_parses["fig1/0"], fixture_parses["fig1/1"])
        with pytest.raises(SchemaError, match="trophy1"):
            resolve(bundle, trophy, wrong)

    def test_overfit_on_fixture_schema_gives_margin(self, vocab, fixture_schemas, fixture_parses):
        # the resolve-side contract of the overfit run: clear score margin
        plan = MaskPlan.inside([1])
        config, _, params = tiny_model(len(vocab), seed=4, plan=plan,
                                       hidden_size=16, ff_size=32, dropout_rate=0.1)
        (trophy,) = [s for s in fixture_schemas if s.id == "trophy1"]
        examples = make_training_examples([trophy], vocab, fixture_parses, max_len=32)
        hyper = Hyperparams(base_lr=3e-3, batch_size=2, warmup_frac=0.1,
                            max_epochs=60, dropout=0.1, seed=0, max_seq_len=32)
        params, log = fine_tune(params, examples, hyper, plan, config)
        bundle = ModelBundle(params=params, config=config, plan=plan, vocab=vocab, max_len=32)
        prediction = resolve(bundle, trophy,
                             (fixture_parses["trophy1/0"], fixture_parses["trophy1/1"]))
        assert prediction.correct
        assert prediction.scores[0] - prediction.scores[1] > 0.2
