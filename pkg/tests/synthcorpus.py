"""Synthetic schema corpora for training tests.

Every schema instantiates the template

    N1 saw N2 because it was ADJ .

with the pronoun at word 4 and candidates (N1, N2). Two flavors:

* lexical: ADJ is the signature adjective of the correct noun, so the
  answer is readable off the words alone (fast to overfit).
* structural: ADJ is random and the answer is balanced, so word content
  carries no signal; instead, the correct candidate's parse attaches the
  substituted word to the predicate "was" while the incorrect one attaches
  it to a distant noun. Only a model that sees the dependency mask can
  separate the labels without memorizing.
"""

from __future__ import annotations

import numpy as np

from winomask.depmask import DepParse
from winomask.schema import Schema
from winomask.tokenizer import SPECIAL_PIECES, Vocab

NOUNS = [
    "lion", "zebra", "hammer", "vase", "wagon", "kettle", "ladder", "mirror",
    "pillow", "anchor", "basket", "candle", "drum", "engine", "feather", "goblet",
    "helmet", "island", "jacket", "lantern", "magnet", "needle", "organ", "pebble",
]
ADJECTIVES = [
    "fierce", "striped", "sturdy", "fragile", "wooden", "shiny", "tall", "clear",
    "soft", "heavy", "woven", "bright", "loud", "noisy", "light", "golden",
    "hard", "remote", "warm", "dim", "strong", "sharp", "grand", "smooth",
]
TEMPLATE_WORDS = ["saw", "because", "it", "was", "."]

# 1-based head maps for "N1 saw N2 because CAND was ADJ ." (token 5 is the
# substituted candidate). In the adjacent tree the substituted word heads
# the whole subordinate clause and hangs off the predicate "was"; in the
# distant tree it is a leaf under the far noun N2 and the clause attaches
# to "was" directly.
_ADJACENT_HEADS = {1: 2, 2: 0, 3: 2, 4: 5, 5: 6, 6: 2, 7: 5, 8: 2}
_DISTANT_HEADS = {1: 2, 2: 0, 3: 2, 4: 6, 5: 3, 6: 2, 7: 6, 8: 2}


def corpus_vocab() -> Vocab:
    pieces = list(SPECIAL_PIECES) + TEMPLATE_WORDS + NOUNS + ADJECTIVES
    return Vocab(piece_to_id={p: i for i, p in enumerate(pieces)},
                 id_to_piece=tuple(pieces))


def _parse(words: list[str], heads_1based: dict[int, int], key: str) -> DepParse:
    ordered = tuple(heads_1based[i] - 1 for i in range(1, 9))
    return DepParse(words=tuple(words), heads=ordered,
                    deprels=("dep",) * 8, sent_id=key)


def make_corpus(n_schemas: int, seed: int, structural: bool
                ) -> tuple[list[Schema], dict[str, DepParse]]:
    """Build n_schemas schemas plus a parse per candidate sentence."""
    rng = np.random.default_rng(seed)
    schemas: list[Schema] = []
    parses: dict[str, DepParse] = {}
    for k in range(n_schemas):
        i, j = rng.choice(len(NOUNS), size=2, replace=False)
        answer = int(rng.integers(2))
        nouns = (NOUNS[i], NOUNS[j])
        if structural:
            adjective = ADJECTIVES[int(rng.integers(len(ADJECTIVES)))]
        else:
            adjective = ADJECTIVES[(i, j)[answer]]
        words = [nouns[0], "saw", nouns[1], "because", "it", "was", adjective, "."]
        schema = Schema(id=f"syn{k:04d}", words=tuple(words), pronoun_span=(4, 5),
                        candidates=nouns, answer_index=answer)
        schemas.append(schema)
        for cand in (0, 1):
            sentence = list(words)
            sentence[4] = nouns[cand]
            if structural and cand != answer:
                heads = _DISTANT_HEADS
            else:
                heads = _ADJACENT_HEADS
            key = f"{schema.id}/{cand}"
            parses[key] = _parse(sentence, heads, key)
    return schemas, parses
