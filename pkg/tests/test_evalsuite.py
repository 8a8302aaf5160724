import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from alignlab.clone import clone_text
from alignlab.errors import DataError
from alignlab.evalsuite import (clka_probe, clone_token_ids,
                                embedding_alignment_score, leak_ratio,
                                lm_scorer, make_prompts, oracle_scorer,
                                perplexity, random_scorer, statement_loglik,
                                statement_logliks)
from alignlab.knowledge import ProbeItem, render_statement
from alignlab.model import ModelConfig, forward_lm, init_state
from alignlab.prealign import perfect_align_init
from alignlab.tokenizer import encode_with_spans


@pytest.fixture(scope="module")
def eval_world(tiny_vocab, tiny_corpus):
    vocab, cmap = tiny_vocab
    cfg = ModelConfig(vocab_size=len(vocab), d_model=32, n_layers=2,
                      n_heads=2, ctx=64)
    st = init_state(cfg, seed=41)
    return vocab, cmap, st


def _manual_stream_nll(state, vocab, docs):
    """Plain forward over the packed stream, one window at a time."""
    toks = []
    for d in docs:
        toks.append(vocab.bos_id)
        ids, _ = encode_with_spans(vocab, d)
        toks.extend(ids)
    ctx = state.config.ctx
    total, n = 0.0, 0
    for s in range(0, len(toks) - 1, ctx):
        x = torch.tensor([toks[s: s + ctx]])
        y = torch.tensor([toks[s + 1: s + ctx + 1]])
        x = x[:, : y.shape[1]]
        logits, _ = forward_lm(state, x)
        nll = F.cross_entropy(logits[0], y[0], reduction="sum")
        total += float(nll.detach())
        n += y.shape[1]
    return total, n


def test_perplexity_matches_manual_forward(eval_world, tiny_corpus):
    vocab, _, st = eval_world
    docs = tiny_corpus[:6]
    res = perplexity(st, vocab, docs, batch_chunks=3)
    want_sum, want_n = _manual_stream_nll(st, vocab, docs)
    assert res["n_tokens"] == want_n
    assert math.isclose(res["nll_sum"], want_sum, rel_tol=1e-5)
    assert math.isclose(res["ppl"], math.exp(want_sum / want_n), rel_tol=1e-4)


def test_perplexity_batching_is_invariant(eval_world, tiny_corpus):
    vocab, _, st = eval_world
    docs = tiny_corpus[:6]
    a = perplexity(st, vocab, docs, batch_chunks=1)
    b = perplexity(st, vocab, docs, batch_chunks=8)
    assert a["n_tokens"] == b["n_tokens"]
    assert math.isclose(a["nll_sum"], b["nll_sum"], rel_tol=1e-5)


def test_perplexity_word_filter(eval_world, tiny_corpus):
    vocab, _, st = eval_world
    docs = tiny_corpus[:4]
    words = {w for d in docs for w in d.split()}
    pick = sorted(words)[0]
    res = perplexity(st, vocab, docs, word_filter=lambda w: w == pick)
    n_expected = 0
    for d in docs:
        for w in d.split():
            if w == pick:
                n_expected += len(encode_with_spans(vocab, w)[0])
    assert res["n_tokens"] == n_expected
    with pytest.raises(DataError):
        perplexity(st, vocab, docs, word_filter=lambda w: False)


def test_perfect_init_equalizes_clone_perplexity(eval_world, tiny_corpus):
    vocab, cmap, _ = eval_world
    cfg = ModelConfig(vocab_size=len(vocab), d_model=32, n_layers=2,
                      n_heads=2, ctx=64)
    st = init_state(cfg, seed=43)
    perfect_align_init(st, cmap)
    docs = tiny_corpus[:8]
    clone_docs = [clone_text(d) for d in docs]
    a = perplexity(st, vocab, docs)
    b = perplexity(st, vocab, clone_docs)
    assert a["n_tokens"] == b["n_tokens"]
    assert abs(a["nll_sum"] - b["nll_sum"]) < 1e-6
    assert abs(a["ppl"] - b["ppl"]) < 1e-9


def test_statement_loglik_matches_manual(eval_world, tiny_corpus):
    vocab, _, st = eval_world
    text = tiny_corpus[0]
    ids, _ = encode_with_spans(vocab, text)
    x = torch.tensor([[vocab.bos_id] + ids[:-1]])
    y = torch.tensor([ids])
    logits, _ = forward_lm(st, x)
    want = -float(F.cross_entropy(logits[0], y[0], reduction="sum").detach())
    got = statement_loglik(st, vocab, text)
    assert abs(got - want) < 1e-3


def test_statement_batch_padding_neutral(eval_world, tiny_corpus):
    vocab, _, st = eval_world
    texts = [tiny_corpus[0], tiny_corpus[1][:20], "the cat ."]
    batch = statement_logliks(st, vocab, texts)
    singles = np.asarray([statement_loglik(st, vocab, t) for t in texts])
    assert np.allclose(batch, singles, atol=1e-3)


def _toy_probes():
    return [
        ProbeItem("Varo", "origin", "Kel", ("Nim", "Sul", "Tav")),
        ProbeItem("Bamo", "origin", "Nim", ("Kel", "Sul", "Tav")),
    ]


def test_clka_strict_ranking_and_ties():
    probes = _toy_probes()
    texts0 = [render_statement(p.subject, p.relation, o)
              for p in probes for o in (p.true_object,) + p.distractors]

    def make_fn(scores):
        table = dict(zip(texts0, scores))
        return lambda texts: np.asarray([table[t] for t in texts])

    # first probe clearly correct, second tied -> tie counts as incorrect
    fn = make_fn([1.0, 0.2, 0.3, 0.1, 0.7, 0.7, 0.2, 0.1])
    res = clka_probe(probes, fn)
    assert res["accuracy"] == 0.5
    assert res["n"] == 2.0
    fn = make_fn([1.0, 0.2, 0.3, 0.1, 0.8, 0.7, 0.2, 0.1])
    assert clka_probe(probes, fn)["accuracy"] == 1.0


def test_oracle_scorer_is_ceiling():
    probes = _toy_probes()
    fn = oracle_scorer(probes, marker="§")
    assert clka_probe(probes, fn)["accuracy"] == 1.0
    assert clka_probe(probes, fn, clone=True, marker="§")["accuracy"] == 1.0


def test_random_scorer_depends_only_on_text():
    fn = random_scorer(7)
    texts = ["a b", "a c", "a b"]
    s = fn(texts)
    assert s[0] == s[2] != s[1]
    assert np.array_equal(s, random_scorer(7)(texts))
    assert not np.array_equal(s, random_scorer(8)(texts))
    assert ((0 <= s) & (s < 1)).all()


def test_lm_scorer_batches_consistently(eval_world):
    vocab, _, st = eval_world
    probes = _toy_probes()
    texts = [render_statement(p.subject, p.relation, o)
             for p in probes for o in (p.true_object,) + p.distractors]
    a = lm_scorer(st, vocab, probe_batch=3)(texts)
    b = lm_scorer(st, vocab, probe_batch=100)(texts)
    assert np.allclose(a, b, atol=1e-3)


def test_alignment_score_perfect_and_random(eval_world):
    vocab, cmap, st = eval_world
    pairs = [(vocab.tokens[b], vocab.tokens[c]) for b, c in cmap.pairs()
             if not vocab.tokens[b].startswith("##")][:300]
    random_score = embedding_alignment_score(st, vocab, pairs)
    assert abs(random_score) < 0.1
    cfg = ModelConfig(vocab_size=len(vocab), d_model=32, n_layers=2,
                      n_heads=2, ctx=64)
    st2 = init_state(cfg, seed=47)
    perfect_align_init(st2, cmap)
    assert embedding_alignment_score(st2, vocab, pairs) > 1 - 1e-5
    sub = embedding_alignment_score(st2, vocab, pairs, max_pairs=32, seed=3)
    assert sub > 1 - 1e-5


def test_leak_ratio_counts_marked_tokens(eval_world, tiny_corpus):
    vocab, cmap, st = eval_world
    prompts = make_prompts(vocab, tiny_corpus, prompt_len=6, n=32, seed=5)
    assert len(prompts) == 32
    assert all(len(p) == 6 and p[0] == vocab.bos_id for p in prompts)
    leak_ids = clone_token_ids(vocab)
    assert leak_ids and all(vocab.tokens[i].endswith("§") for i in leak_ids)
    res = leak_ratio(st, vocab, prompts, max_new_tokens=4, seed=9,
                     leak_ids=leak_ids)
    # untrained model samples near-uniformly; half the vocabulary is marked
    assert res["n"] == 32.0
    assert res["leak_ratio"] > 0.5
    again = leak_ratio(st, vocab, prompts, max_new_tokens=4, seed=9,
                       leak_ids=leak_ids)
    assert res == again
    none = leak_ratio(st, vocab, prompts, max_new_tokens=4, seed=9,
                      leak_ids=frozenset())
    assert none["leak_ratio"] == 0.0


def test_leak_ratio_validates_prompts(eval_world):
    vocab, _, st = eval_world
    with pytest.raises(DataError):
        leak_ratio(st, vocab, [[1, 2], [1, 2, 3]], 4, 0, frozenset())
    with pytest.raises(DataError):
        leak_ratio(st, vocab, [[1] * 60], 10, 0, frozenset())
    with pytest.raises(DataError):
        leak_ratio(st, vocab, [], 4, 0, frozenset())


def test_make_prompts_needs_long_documents(eval_world):
    vocab, _, st = eval_world
    with pytest.raises(DataError):
        make_prompts(vocab, ["a"], prompt_len=50, n=4, seed=0)
