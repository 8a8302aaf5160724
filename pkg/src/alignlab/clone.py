"""Clone-language construction.

The clone language is a bijective copy of the base language: every word
gains a fixed marker suffix, so the two languages share grammar and
semantics but have zero token overlap. The specials are shared
infrastructure and are not cloned.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DataError
from .tokenizer import SPECIALS, Vocab

DEFAULT_MARKER = "§"


@dataclass
class CloneMap:
    """Token-level bijection between base and clone vocabulary ids."""

    marker: str
    base_to_clone: dict[int, int]
    clone_to_base: dict[int, int]

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self.base_to_clone.items())


def build_clone_map(vocab: Vocab, marker: str = DEFAULT_MARKER) -> tuple[Vocab, CloneMap]:
    """Extend a base-only vocabulary with clone tokens.

    Clone ids are appended after the base tokens in base-id order, so the
    mapping is reproducible from the vocabulary file alone.
    """
    if not marker:
        raise DataError("clone marker must be a non-empty string")
    for t in vocab.tokens:
        if marker in t:
            raise DataError(f"base token {t!r} already contains the clone marker")
    n = len(vocab.tokens)
    tokens = list(vocab.tokens)
    base_to_clone: dict[int, int] = {}
    for i in range(len(SPECIALS), n):
        base_to_clone[i] = len(tokens)
        tokens.append(vocab.tokens[i] + marker)
    full = Vocab(tokens, marker=marker)
    return full, CloneMap(marker, base_to_clone, {c: b for b, c in base_to_clone.items()})


def clone_map_from_vocab(vocab: Vocab) -> CloneMap:
    """Recover the bijection from an extended vocabulary."""
    m = vocab.marker
    if not m:
        raise DataError("vocabulary has no clone marker configured")
    base_to_clone: dict[int, int] = {}
    for i, t in enumerate(vocab.tokens[len(SPECIALS):], start=len(SPECIALS)):
        if t.endswith(m):
            stem = t[: -len(m)]
            b = vocab.token_to_id.get(stem)
            if b is None:
                raise DataError(f"clone token {t!r} has no base counterpart")
            base_to_clone[b] = i
    n_text = len(vocab.tokens) - len(SPECIALS)
    if len(base_to_clone) * 2 != n_text:
        raise DataError("vocabulary is not a complete base/clone bijection")
    return CloneMap(m, base_to_clone, {c: b for b, c in base_to_clone.items()})


def clone_word(word: str, marker: str = DEFAULT_MARKER) -> str:
    return word + marker


def clone_text(text: str, marker: str = DEFAULT_MARKER) -> str:
    """Clone a document word by word."""
    return " ".join(clone_word(w, marker) for w in text.split())


def is_clone_word(word: str, marker: str) -> bool:
    return word.endswith(marker) and len(word) > len(marker)
