"""Deterministic lowercase word + subword tokenization with pair encoding.

Sentence pairs are laid out as [CLS] A [SEP] B [SEP] with segment ids 0
through the first [SEP] inclusive and 1 after. Each subword position keeps
a pointer back to its source word so attention masks built at word level
can be expanded to token level.
"""

from __future__ import annotations

from dataclasses import dataclass

PAD = "[PAD]"
UNK = "[UNK]"
CLS = "[CLS]"
SEP = "[SEP]"
MASK = "[MASK]"
SPECIAL_PIECES = (PAD, UNK, CLS, SEP, MASK)

CONTINUATION = "##"

# alignment marker for positions occupied by [CLS]/[SEP]
SPECIAL = -1


class VocabError(ValueError):
    """Vocabulary file violates the one-piece-per-line contract."""


@dataclass(frozen=True)
class Vocab:
    piece_to_id: dict
    id_to_piece: tuple

    def __len__(self) -> int:
        return len(self.id_to_piece)

    def __contains__(self, piece: str) -> bool:
        return piece in self.piece_to_id

    def id(self, piece: str) -> int:
        return self.piece_to_id[piece]


def load_vocab(path) -> Vocab:
    """Read a vocabulary file: one piece per line, line number = id."""
    piece_to_id: dict[str, int] = {}
    pieces: list[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            piece = line.rstrip("\n")
            if not piece:
                raise VocabError(f"{path}: empty piece at line {lineno + 1}")
            if piece in piece_to_id:
                raise VocabError(f"{path}: duplicate piece {piece!r} at line {lineno + 1}")
            piece_to_id[piece] = lineno
            pieces.append(piece)
    for special in SPECIAL_PIECES:
        if special not in piece_to_id:
            raise VocabError(f"{path}: missing special token {special}")
    if piece_to_id[PAD] != 0:
        raise VocabError(f"{path}: {PAD} must be id 0, found id {piece_to_id[PAD]}")
    return Vocab(piece_to_id=piece_to_id, id_to_piece=tuple(pieces))


def word_tokenize(text: str) -> list[tuple[str, tuple[int, int]]]:
    """Lowercase and split into words; punctuation becomes its own token.

    Returns (word, (start, end)) pairs with spans into the original text.
    """
    out: list[tuple[str, tuple[int, int]]] = []
    start = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                out.append((text[start:i].lower(), (start, i)))
                start = None
        elif ch.isalnum():
            if start is None:
                start = i
        else:
            if start is not None:
                out.append((text[start:i].lower(), (start, i)))
                start = None
            out.append((ch.lower(), (i, i + 1)))
    if start is not None:
        out.append((text[start:].lower(), (start, len(text))))
    return out


def words_of(text: str) -> list[str]:
    return [w for w, _ in word_tokenize(text)]


def wordpiece(word: str, vocab: Vocab) -> list[str]:
    """Greedy longest-match-from-the-left segmentation.

    Non-initial pieces carry the ## continuation prefix. A position with no
    match collapses the whole word to [UNK].
    """
    if not word:
        raise ValueError("wordpiece requires a nonempty word")
    pieces: list[str] = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION + piece
            if piece in vocab:
                match = piece
                break
            end -= 1
        if match is None:
            return [UNK]
        pieces.append(match)
        start = end
    return pieces


@dataclass
class Encoding:
    """A [CLS] A [SEP] B [SEP] layout at subword resolution."""

    pieces: list[str]
    token_ids: list[int]
    segment_ids: list[int]
    alignment: list[int]          # source word index per position, SPECIAL for [CLS]/[SEP]
    word_offsets: list[tuple[int, int]]  # char spans over the space-joined word sequence

    def __len__(self) -> int:
        return len(self.token_ids)


def encode_pair(seg_a_words: list[str], seg_b_words: list[str], vocab: Vocab,
                max_len: int) -> Encoding:
    """Encode a two-segment word sequence into the standard pair layout.

    Word indices in the alignment are global over seg_a + seg_b. When the
    layout exceeds max_len, trailing pieces are dropped from whichever
    segment is currently longer (ties truncate segment A).
    """
    if max_len < 3:
        raise ValueError(f"max_len must allow [CLS] and two [SEP], got {max_len}")
    if not seg_b_words:
        raise ValueError("segment B must be nonempty")

    def segment_pieces(words: list[str], word_offset: int) -> list[tuple[str, int]]:
        tagged = []
        for w_idx, word in enumerate(words):
            for piece in wordpiece(word.lower(), vocab):
                tagged.append((piece, word_offset + w_idx))
        return tagged

    pieces_a = segment_pieces(seg_a_words, 0)
    pieces_b = segment_pieces(seg_b_words, len(seg_a_words))
    while len(pieces_a) + len(pieces_b) + 3 > max_len:
        if len(pieces_a) >= len(pieces_b) and pieces_a:
            pieces_a.pop()
        else:
            pieces_b.pop()

    pieces = [CLS] + [p for p, _ in pieces_a] + [SEP] + [p for p, _ in pieces_b] + [SEP]
    alignment = [SPECIAL] + [w for _, w in pieces_a] + [SPECIAL] + [w for _, w in pieces_b] + [SPECIAL]
    segment_ids = [0] * (len(pieces_a) + 2) + [1] * (len(pieces_b) + 1)
    token_ids = [vocab.id(p) for p in pieces]

    offsets: list[tuple[int, int]] = []
    cursor = 0
    for word in list(seg_a_words) + list(seg_b_words):
        offsets.append((cursor, cursor + len(word)))
        cursor += len(word) + 1
    return Encoding(pieces=pieces, token_ids=token_ids, segment_ids=segment_ids,
                    alignment=alignment, word_offsets=offsets)
