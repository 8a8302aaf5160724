"""Shared fixtures: a tiny vocabulary with clones, and tiny corpora.

The heavyweight session fixtures that drive the acceptance battery live in
test_acceptance.py; everything here stays fast.
"""

from __future__ import annotations

import pytest
import torch

from alignlab.clone import build_clone_map, clone_text
from alignlab.textgen import generate_corpus
from alignlab.tokenizer import train_vocab

torch.set_num_threads(1)

_REPORT_LINES: list[str] = []


def record_criterion(line: str) -> None:
    _REPORT_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _REPORT_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _REPORT_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tiny_corpus() -> list[str]:
    return generate_corpus(8000, seed=11)


@pytest.fixture(scope="session")
def tiny_vocab(tiny_corpus):
    base = train_vocab(tiny_corpus, max_word_vocab=5000)
    vocab, cmap = build_clone_map(base)
    return vocab, cmap


@pytest.fixture(scope="session")
def tiny_clone_corpus(tiny_corpus) -> list[str]:
    return [clone_text(d) for d in tiny_corpus[:120]]
