import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from winomask.depmask import load_parse_sidecar
from winomask.encoder import EncoderConfig, MaskPlan, init_params
from winomask.schema import load_schemas
from winomask.tokenizer import load_vocab

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def vocab():
    return load_vocab(FIXTURES / "vocab.txt")


@pytest.fixture(scope="session")
def fixture_schemas():
    return load_schemas(FIXTURES / "schemas.jsonl")


@pytest.fixture(scope="session")
def fixture_parses():
    return load_parse_sidecar(FIXTURES / "parses.conllu")


@pytest.fixture
def tiny_config(vocab):
    return EncoderConfig(vocab_size=len(vocab), num_layers=2, num_heads=2,
                         hidden_size=8, ff_size=16, max_positions=32,
                         dropout_rate=0.0)


def tiny_model(vocab_size: int, seed: int = 0, plan: MaskPlan | None = None,
               dtype=np.float32, **overrides):
    """Small encoder + params for tests; returns (config, plan, params)."""
    defaults = dict(num_layers=2, num_heads=2, hidden_size=8, ff_size=16,
                    max_positions=32, dropout_rate=0.0)
    defaults.update(overrides)
    config = EncoderConfig(vocab_size=vocab_size, **defaults)
    plan = plan or MaskPlan.none()
    params = init_params(config, plan, seed=seed, dtype=dtype)
    return config, plan, params


def random_tree_heads(n: int, rng: np.random.Generator) -> list[int]:
    """Random dependency tree over n words: a random root, every other word
    headed by a word with a smaller random rank, then relabeled."""
    order = rng.permutation(n)
    heads = [0] * n
    heads[order[0]] = -1
    for rank in range(1, n):
        parent_rank = int(rng.integers(rank))
        heads[order[rank]] = int(order[parent_rank])
    return heads
