"""Codeswitching augmentation.

A switched word's tokens are replaced by its translation's tokens in the
input stream. The two variants differ only in what is predicted around the
substitution:

  vanilla     every position predicts the next token of the substituted
              stream, translation tokens included.
  input_only  the substitution appears on the input side only. The position
              just before the switch still predicts the original word's
              first token; predictions of the translation's remaining
              tokens are unscored; the position at the end of the switch
              predicts whatever originally followed the word.

Arrays are token-aligned with the substituted stream: target_of[j] is the
label used by whichever position predicts token j, and scored[j] says if
that prediction is scored at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aligntable import AlignmentTable
from .errors import ConfigError
from .tokenizer import Vocab, encode_word

MODES = ("off", "vanilla", "input_only")


@dataclass
class CodeswitchedBatch:
    tokens: np.ndarray   # substituted stream
    target_of: np.ndarray
    scored: np.ndarray
    n_words: int
    n_switched: int


def build_switch_mapping(table: AlignmentTable, bidirectional: bool = True) -> dict[str, str]:
    mapping = {e.source: e.translation for e in table.entries}
    if bidirectional:
        for e in table.entries:
            mapping.setdefault(e.translation, e.source)
    return mapping


def codeswitch_augment(vocab: Vocab, text: str, mapping: dict[str, str],
                       ratio: float, mode: str, gen: np.random.Generator,
                       exempt: bool = False) -> CodeswitchedBatch:
    """Apply per-word Bernoulli switching to one document.

    The random draw happens for every eligible word even when the document
    is exempt or the mode is off, so the stream of decisions is stable
    across modes and paired runs stay comparable.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown codeswitch mode {mode!r}")
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"codeswitch ratio must be in [0, 1], got {ratio}")
    tokens: list[int] = []
    target_of: list[int] = []
    scored: list[bool] = []
    words = text.split()
    n_switched = 0
    for w in words:
        tr = mapping.get(w)
        switch = (tr is not None and gen.random() < ratio
                  and not exempt and mode != "off")
        if not switch:
            for t in encode_word(vocab, w):
                tokens.append(t)
                target_of.append(t)
                scored.append(True)
            continue
        n_switched += 1
        x = encode_word(vocab, w)
        y = encode_word(vocab, tr)
        if mode == "vanilla":
            for t in y:
                tokens.append(t)
                target_of.append(t)
                scored.append(True)
        else:
            for k, t in enumerate(y):
                tokens.append(t)
                if k == 0:
                    target_of.append(x[0])
                    scored.append(True)
                else:
                    target_of.append(t)
                    scored.append(False)
    return CodeswitchedBatch(
        np.asarray(tokens, dtype=np.int64),
        np.asarray(target_of, dtype=np.int64),
        np.asarray(scored, dtype=bool),
        n_words=len(words),
        n_switched=n_switched,
    )


def lm_triple(batch: CodeswitchedBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standalone (inputs, targets, mask) for one unpacked document."""
    return batch.tokens[:-1], batch.target_of[1:], batch.scored[1:]
