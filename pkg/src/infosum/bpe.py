"""Deterministic toy byte-pair tokenizer with word-to-token alignment.

Words are encoded independently; every non-initial word gets a leading-space
marker folded into its symbol sequence before merging, so decoding restores
whitespace exactly. Alongside the token ids, encoding returns the contiguous
token range covering each input word, which downstream alignment of
word-level entity spans relies on.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

SPACE_MARKER = "Ġ"  # printable stand-in for a leading space

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
SPECIAL_TOKENS = (PAD, BOS, EOS, UNK)


@dataclass(frozen=True)
class MergeTable:
    """Ordered merge rules plus the derived symbol vocabulary."""

    merges: tuple[tuple[str, str], ...]
    alphabet: tuple[str, ...]
    vocab: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.vocab:
            object.__setattr__(self, "vocab", _build_vocab(self.alphabet, self.merges))

    @property
    def pad_id(self) -> int:
        return self.vocab[PAD]

    @property
    def bos_id(self) -> int:
        return self.vocab[BOS]

    @property
    def eos_id(self) -> int:
        return self.vocab[EOS]

    @property
    def unk_id(self) -> int:
        return self.vocab[UNK]

    @property
    def size(self) -> int:
        return len(self.vocab)

    def to_json(self) -> str:
        return json.dumps(
            {
                "merges": [list(m) for m in self.merges],
                "alphabet": list(self.alphabet),
                "specials": {PAD: self.pad_id, BOS: self.bos_id, EOS: self.eos_id, UNK: self.unk_id},
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, text: str) -> "MergeTable":
        obj = json.loads(text)
        return cls(
            merges=tuple((l, r) for l, r in obj["merges"]),
            alphabet=tuple(obj["alphabet"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "MergeTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _build_vocab(alphabet, merges) -> dict[str, int]:
    vocab = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
    for sym in alphabet:
        vocab[sym] = len(vocab)
    for left, right in merges:
        merged = left + right
        if merged not in vocab:
            vocab[merged] = len(vocab)
    return vocab


def _word_symbols(word: str, initial: bool) -> list[str]:
    syms = list(word)
    if not initial:
        syms = [SPACE_MARKER] + syms
    return syms


def train_merges(corpus: list[list[str]], merge_count: int) -> MergeTable:
    """Learn greedy highest-frequency merges from word sequences.

    Ties between equally frequent pairs break lexicographically on
    (left, right), so retraining on the same corpus is reproducible.
    """
    if not corpus or all(len(seq) == 0 for seq in corpus):
        raise ValueError("empty corpus")
    if merge_count < 0:
        raise ValueError("merge_count must be >= 0")

    word_counts: Counter[tuple[str, ...]] = Counter()
    alphabet: set[str] = set()
    for seq in corpus:
        for pos, word in enumerate(seq):
            syms = tuple(_word_symbols(word, initial=(pos == 0)))
            word_counts[syms] += 1
            alphabet.update(syms)

    merges: list[tuple[str, str]] = []
    words = dict(word_counts)
    for _ in range(merge_count):
        pair_counts: Counter[tuple[str, str]] = Counter()
        for syms, cnt in words.items():
            for a, b in zip(syms, syms[1:]):
                pair_counts[(a, b)] += cnt
        if not pair_counts:
            break
        best = min(pair_counts, key=lambda p: (-pair_counts[p], p))
        merges.append(best)
        words = {_apply_merge(syms, best): cnt for syms, cnt in words.items()}
        merged_total: Counter[tuple[str, ...]] = Counter()
        for syms, cnt in words.items():
            merged_total[syms] += cnt
        words = dict(merged_total)

    return MergeTable(merges=tuple(merges), alphabet=tuple(sorted(alphabet)))


def _apply_merge(syms: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    out = []
    i = 0
    while i < len(syms):
        if i + 1 < len(syms) and (syms[i], syms[i + 1]) == pair:
            out.append(syms[i] + syms[i + 1])
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return tuple(out)


def _encode_one(word: str, initial: bool, table: MergeTable) -> list[int]:
    syms = tuple(_word_symbols(word, initial))
    for pair in table.merges:
        if len(syms) < 2:
            break
        syms = _apply_merge(syms, pair)
    return [table.vocab.get(s, table.unk_id) for s in syms]


def encode_words(words: list[str], table: MergeTable):
    """Encode a word sequence, returning (token ids, per-word token ranges).

    Ranges are contiguous, ordered, and jointly cover the token sequence,
    one (start, end) per input word. Symbols outside the trained alphabet
    fall back to the unk id.
    """
    ids: list[int] = []
    ranges: list[tuple[int, int]] = []
    for pos, word in enumerate(words):
        toks = _encode_one(word, initial=(pos == 0), table=table)
        ranges.append((len(ids), len(ids) + len(toks)))
        ids.extend(toks)
    return ids, ranges


def decode(ids: list[int], table: MergeTable) -> str:
    """Invert encode_words: strip specials, restore space markers, join."""
    id_to_sym = {i: s for s, i in table.vocab.items()}
    special_ids = {table.pad_id, table.bos_id, table.eos_id}
    pieces = []
    for tid in ids:
        if tid not in id_to_sym:
            raise ValueError(f"token id {tid} out of range")
        if tid in special_ids:
            continue
        pieces.append(id_to_sym[tid])
    text = "".join(pieces).replace(SPACE_MARKER, " ")
    return text.lstrip(" ")
