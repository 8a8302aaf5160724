"""Whitespace-word tokenizer with character fallback.

Words are whitespace-delimited. The most frequent words become whole tokens;
everything else is spelled out as character pieces (first char bare, later
chars prefixed with "##"). The vocabulary file is one token surface per
line and the line number is the id; ids 0..2 are the specials <pad>, <bos>,
<unk>. <bos> doubles as the document separator when streams are packed.

Clone-language tokens are ordinary vocabulary entries whose surface ends
with the clone marker; encode falls back to marker-aware character pieces
for cloned words that are out of vocabulary, and decode re-merges a fully
marked piece group into stem-plus-single-marker so the round trip holds in
both languages.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .errors import DataError

PAD, BOS, UNK = "<pad>", "<bos>", "<unk>"
SPECIALS = (PAD, BOS, UNK)
CONT = "##"


@dataclass
class WordSpan:
    """Token slice [start, end) covering one whitespace word."""

    word: str
    start: int
    end: int


@dataclass
class Vocab:
    tokens: list[str]
    marker: str | None = None
    token_to_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}
        if len(self.token_to_id) != len(self.tokens):
            raise DataError("duplicate token surfaces in vocabulary")
        if tuple(self.tokens[:3]) != SPECIALS:
            raise DataError("vocabulary must start with <pad>, <bos>, <unk>")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def bos_id(self) -> int:
        return 1

    @property
    def unk_id(self) -> int:
        return 2


def train_vocab(lines: list[str], max_word_vocab: int, marker: str | None = None) -> Vocab:
    """Build a vocabulary from corpus lines.

    Keeps the max_word_vocab most frequent words whole (ties broken
    lexicographically) and adds bare plus continuation pieces for every
    character seen, so any in-charset word stays encodable.
    """
    counts: Counter[str] = Counter()
    for line in lines:
        counts.update(line.split())
    if not counts:
        raise DataError("cannot train a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    words = [w for w, _ in ranked[:max_word_vocab]]
    chars = sorted({c for w in counts for c in w})
    tokens = list(SPECIALS) + words
    seen = set(tokens)
    for c in chars:
        if c not in seen:
            tokens.append(c)
            seen.add(c)
    for c in chars:
        piece = CONT + c
        if piece not in seen:
            tokens.append(piece)
            seen.add(piece)
    return Vocab(tokens, marker=marker)


def _char_pieces(word: str) -> list[str]:
    return [word[0]] + [CONT + c for c in word[1:]]


def encode_word(vocab: Vocab, word: str) -> list[int]:
    """Encode one whitespace word to token ids (no specials)."""
    t2i = vocab.token_to_id
    wid = t2i.get(word)
    if wid is not None:
        return [wid]
    m = vocab.marker
    if m and word.endswith(m) and len(word) > len(m):
        stem = word[: -len(m)]
        return [t2i.get(p + m, vocab.unk_id) for p in _char_pieces(stem)]
    return [t2i.get(p, vocab.unk_id) for p in _char_pieces(word)]


def encode_with_spans(vocab: Vocab, text: str) -> tuple[list[int], list[WordSpan]]:
    """Encode a document, recording the token span of every word."""
    ids: list[int] = []
    spans: list[WordSpan] = []
    for word in text.split():
        start = len(ids)
        ids.extend(encode_word(vocab, word))
        spans.append(WordSpan(word, start, len(ids)))
    return ids, spans


def decode(vocab: Vocab, ids: list[int]) -> str:
    """Invert encode_with_spans output back to space-joined words."""
    groups: list[list[str]] = []
    for i in ids:
        s = vocab.tokens[i]
        if s.startswith(CONT) and groups:
            groups[-1].append(s[len(CONT):])
        else:
            groups.append([s])
    m = vocab.marker
    words = []
    for g in groups:
        if m and len(g) > 1 and all(p.endswith(m) for p in g):
            words.append("".join(p[: -len(m)] for p in g) + m)
        else:
            words.append("".join(g))
    return " ".join(words)


def save_vocab(path, vocab: Vocab) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in vocab.tokens:
            f.write(t + "\n")


def load_vocab(path, marker: str | None = None) -> Vocab:
    with open(path, encoding="utf-8") as f:
        tokens = [line.rstrip("\n") for line in f]
    while tokens and tokens[-1] == "":
        tokens.pop()
    return Vocab(tokens, marker=marker)
