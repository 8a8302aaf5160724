import numpy as np

from alignlab.textgen import (GENERATOR_WORDS, NOUN_CATEGORIES, generate_corpus,
                              generate_document, read_corpus, write_corpus)
from alignlab.seeding import rng


def test_corpus_is_deterministic():
    a = generate_corpus(5000, seed=3)
    b = generate_corpus(5000, seed=3)
    assert a == b
    c = generate_corpus(5000, seed=4)
    assert a != c


def test_corpus_meets_token_budget():
    docs = generate_corpus(5000, seed=0)
    total = sum(d.count(" ") + 1 for d in docs)
    assert total >= 5000
    # No runaway overshoot: at most one extra document's worth.
    assert total < 5000 + 200


def test_documents_have_detached_punctuation():
    docs = generate_corpus(2000, seed=7)
    for d in docs:
        words = d.split()
        assert words[-1] == "."
        for w in words:
            assert w == "." or "." not in w


def test_all_words_in_generator_wordlist():
    docs = generate_corpus(4000, seed=9, rare_word_rate=0.05)
    for d in docs:
        for w in d.split():
            assert w in GENERATOR_WORDS, w


def test_rare_rate_zero_emits_no_compounds():
    gen = rng(5, "t")
    doc = " ".join(generate_document(gen, rare_word_rate=0.0) for _ in range(50))
    suffixes = ("hood", "ware", "craft")
    base_nouns = {w for ws in NOUN_CATEGORIES.values() for w in ws}
    for w in doc.split():
        if any(w.endswith(s) for s in suffixes):
            assert w in base_nouns


def test_noun_categories_disjoint():
    seen = {}
    for cat, words in NOUN_CATEGORIES.items():
        for w in words:
            assert w not in seen, f"{w} in {cat} and {seen.get(w)}"
            seen[w] = cat


def test_corpus_file_roundtrip(tmp_path):
    docs = generate_corpus(1000, seed=2)
    path = tmp_path / "c.txt"
    write_corpus(path, docs)
    assert read_corpus(path) == docs
