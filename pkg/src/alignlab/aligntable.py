"""Word-level alignment table.

The table is the dictionary consumed by the alignment stage: rows of
(source_word, language_tag, translation). For the clone setup it is
generated mechanically from the vocabulary bijection; for real language
pairs the same TSV format can be supplied externally.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .clone import CloneMap, clone_word
from .errors import DataError
from .tokenizer import CONT, Vocab, encode_word


@dataclass(frozen=True)
class AlignEntry:
    source: str
    tag: str
    translation: str


@dataclass
class AlignmentTable:
    entries: list[AlignEntry]

    def __len__(self) -> int:
        return len(self.entries)


def from_clone_map(vocab: Vocab, clone_map: CloneMap, tag: str = "clone") -> AlignmentTable:
    """One entry per base word token (continuation pieces are skipped)."""
    entries = []
    for b in sorted(clone_map.base_to_clone):
        s = vocab.tokens[b]
        if s.startswith(CONT):
            continue
        entries.append(AlignEntry(s, tag, clone_word(s, clone_map.marker)))
    if not entries:
        raise DataError("clone map produced an empty alignment table")
    return AlignmentTable(entries)


def save_table(path, table: AlignmentTable) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in table.entries:
            f.write(f"{e.source}\t{e.tag}\t{e.translation}\n")


def load_table(path) -> AlignmentTable:
    entries = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{ln}: expected 3 tab-separated fields")
            entries.append(AlignEntry(*parts))
    if not entries:
        raise DataError(f"{path}: empty alignment table")
    return AlignmentTable(entries)


def word_frequencies(lines: list[str]) -> Counter[str]:
    counts: Counter[str] = Counter()
    for line in lines:
        counts.update(line.split())
    return counts


def select_beta(table: AlignmentTable, beta: float, freqs: Counter[str]) -> AlignmentTable:
    """Keep the ceil(beta * N) most frequent entries.

    Ordering is (frequency desc, source word asc), so the selection is a
    deterministic function of the table and the counts.
    """
    if not 0.0 < beta <= 1.0:
        raise DataError(f"beta must be in (0, 1], got {beta}")
    k = math.ceil(beta * len(table.entries))
    ranked = sorted(table.entries, key=lambda e: (-freqs.get(e.source, 0), e.source))
    return AlignmentTable(ranked[:k])


def selected_sources(table: AlignmentTable) -> frozenset[str]:
    return frozenset(e.source for e in table.entries)


def sample_pair_batch(
    table: AlignmentTable,
    vocab: Vocab,
    batch_size: int,
    gen: np.random.Generator,
) -> list[tuple[list[int], list[int]]]:
    """Draw word pairs and encode both sides to token ids.

    Draws without replacement while the table allows it, so a batch never
    contains a duplicated anchor unless the table is smaller than the batch.
    """
    n = len(table.entries)
    if n == 0:
        raise DataError("cannot sample from an empty alignment table")
    replace = batch_size > n
    idx = gen.choice(n, size=batch_size, replace=replace)
    out = []
    for i in idx:
        e = table.entries[int(i)]
        out.append((encode_word(vocab, e.source), encode_word(vocab, e.translation)))
    return out
