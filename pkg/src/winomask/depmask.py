"""CoNLL-U ingestion and binary attention-mask construction.

The word-level mask allows each word to attend to its head, its children,
and itself, which makes it symmetric with a unit diagonal. Token-level
expansion duplicates a word's row over all of its subwords and opens the
rows *and* columns of [CLS]/[SEP] completely, so the classifier token
stays reachable from every position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tokenizer import SPECIAL, Encoding

ROOT = -1

_CONLLU_COLUMNS = 10


class ConlluError(ValueError):
    """Malformed CoNLL-U input or a head structure that is not a tree."""


@dataclass(frozen=True)
class DepParse:
    """One dependency-parsed sentence with 0-based head indices."""

    words: tuple[str, ...]
    heads: tuple[int, ...]          # ROOT (-1) for the root word
    deprels: tuple[str, ...] = ()   # labels are reporting-only; the mask ignores them
    sent_id: str | None = field(default=None, compare=False)

    def __post_init__(self):
        n = len(self.words)
        if len(self.heads) != n:
            raise ConlluError(f"{n} words but {len(self.heads)} heads")
        if self.deprels and len(self.deprels) != n:
            raise ConlluError(f"{n} words but {len(self.deprels)} deprels")
        roots = [i for i, h in enumerate(self.heads) if h == ROOT]
        if len(roots) != 1:
            raise ConlluError(f"expected exactly one root, found {len(roots)}")
        for i, h in enumerate(self.heads):
            if h == ROOT:
                continue
            if not 0 <= h < n:
                raise ConlluError(f"head index {h} of word {i} out of range")
            if h == i:
                raise ConlluError(f"word {i} is its own head")
        # single parent per node + reachability from the root <=> tree
        children: list[list[int]] = [[] for _ in range(n)]
        for i, h in enumerate(self.heads):
            if h != ROOT:
                children[h].append(i)
        reached = set()
        queue = [roots[0]]
        while queue:
            node = queue.pop()
            reached.add(node)
            queue.extend(children[node])
        if len(reached) != n:
            raise ConlluError("head links contain a cycle or a disconnected word")

    def __len__(self) -> int:
        return len(self.words)


def parse_conllu(text: str) -> list[DepParse]:
    """Parse CoNLL-U text into sentences.

    Multiword-token ranges (ids like 3-4) and empty nodes (ids like 5.1)
    are skipped; comment lines may carry a `sent_id` that is attached to
    the sentence.
    """
    sentences: list[DepParse] = []
    words: list[str] = []
    heads: list[int] = []
    deprels: list[str] = []
    sent_id: str | None = None

    def flush(sentence_index: int):
        nonlocal words, heads, deprels, sent_id
        if not words:
            return
        try:
            sentences.append(DepParse(tuple(words), tuple(heads), tuple(deprels), sent_id))
        except ConlluError as e:
            raise ConlluError(f"sentence {sentence_index}: {e}") from e
        words, heads, deprels, sent_id = [], [], [], None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush(len(sentences))
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sent_id") and "=" in body:
                sent_id = body.split("=", 1)[1].strip()
            continue
        cols = line.split("\t")
        if len(cols) != _CONLLU_COLUMNS:
            raise ConlluError(f"line {lineno}: expected {_CONLLU_COLUMNS} tab-separated columns, got {len(cols)}")
        tok_id = cols[0]
        if "-" in tok_id or "." in tok_id:
            continue  # multiword-token range / empty node
        if not tok_id.isdigit():
            raise ConlluError(f"line {lineno}: bad token id {tok_id!r}")
        if int(tok_id) != len(words) + 1:
            raise ConlluError(f"line {lineno}: token id {tok_id} out of sequence")
        if not cols[6].isdigit():
            raise ConlluError(f"line {lineno}: bad head {cols[6]!r}")
        head = int(cols[6])
        words.append(cols[1])
        heads.append(ROOT if head == 0 else head - 1)
        deprels.append(cols[7])
    flush(len(sentences))
    return sentences


def load_conllu(path) -> list[DepParse]:
    with open(path, encoding="utf-8") as f:
        return parse_conllu(f.read())


def load_parse_sidecar(path) -> dict[str, DepParse]:
    """Load a parse sidecar keyed by its `# sent_id = <key>` comments."""
    keyed: dict[str, DepParse] = {}
    for parse in load_conllu(path):
        if parse.sent_id is None:
            raise ConlluError(f"{path}: sidecar sentence without a sent_id comment")
        if parse.sent_id in keyed:
            raise ConlluError(f"{path}: duplicate sent_id {parse.sent_id!r}")
        keyed[parse.sent_id] = parse
    return keyed


def build_word_mask(parse: DepParse) -> np.ndarray:
    """Word-level mask: position (i, j) is 1 iff j is i's head, child, or i itself."""
    n = len(parse)
    mask = np.eye(n, dtype=np.uint8)
    for i, h in enumerate(parse.heads):
        if h != ROOT:
            mask[i, h] = 1
            mask[h, i] = 1
    return mask


def expand_to_subwords(word_mask: np.ndarray, encoding: Encoding) -> np.ndarray:
    """Expand a word-level mask over an encoding's subword positions.

    Each subword inherits its word's row; rows and columns at [CLS]/[SEP]
    positions are all ones.
    """
    n_words = word_mask.shape[0]
    if word_mask.shape != (n_words, n_words):
        raise ValueError(f"word mask must be square, got {word_mask.shape}")
    for pos, w in enumerate(encoding.alignment):
        if w != SPECIAL and not 0 <= w < n_words:
            raise ValueError(f"alignment at position {pos} references word {w} outside {n_words}-word mask")
    padded = np.ones((n_words + 1, n_words + 1), dtype=np.uint8)
    padded[:n_words, :n_words] = word_mask
    mapped = np.asarray([n_words if w == SPECIAL else w for w in encoding.alignment])
    return padded[np.ix_(mapped, mapped)]


def render_mask(mask: np.ndarray, labels: list[str]) -> str:
    """Render a 0/1 mask as a labelled text grid."""
    if len(labels) != mask.shape[0]:
        raise ValueError(f"{len(labels)} labels for {mask.shape[0]} rows")
    width = max((len(x) for x in labels), default=1)
    lines = [" " * (width + 2) + " ".join(f"{i:>2d}" for i in range(mask.shape[1]))]
    for i, label in enumerate(labels):
        row = " ".join(f"{int(v):>2d}" for v in mask[i])
        lines.append(f"{label:>{width}} | {row}")
    return "\n".join(lines)
