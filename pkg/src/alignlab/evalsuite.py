"""Evaluation battery: perplexity, knowledge probes, alignment, leakage.

All evaluations are deterministic functions of (weights, data, seed): no
global RNG, batching chosen so results do not depend on batch size.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable

import numpy as np
import torch
import torch.nn.functional as F

from .errors import DataError
from .knowledge import ProbeItem, render_probe, render_statement
from .model import ModelState, forward_lm
from .seeding import rng
from .tokenizer import Vocab, encode_with_spans

ScoreFn = Callable[[list[str]], np.ndarray]


# ==== perplexity ====

def _eval_stream(vocab: Vocab, docs: list[str]) -> tuple[np.ndarray, list[str]]:
    """Packed token stream with a word surface recorded per token."""
    toks: list[int] = []
    words: list[str] = []
    for d in docs:
        toks.append(vocab.bos_id)
        words.append("<bos>")
        ids, spans = encode_with_spans(vocab, d)
        toks.extend(ids)
        for s in spans:
            words.extend([s.word] * (s.end - s.start))
    return np.asarray(toks, dtype=np.int64), words


def perplexity(state: ModelState, vocab: Vocab, docs: list[str],
               word_filter: Callable[[str], bool] | None = None,
               batch_chunks: int = 8) -> dict[str, float]:
    """Corpus perplexity over a packed stream.

    When word_filter is given, only positions whose target token belongs to
    an accepted word are scored (separator predictions are then excluded).
    """
    ctx = state.config.ctx
    toks, words = _eval_stream(vocab, docs)
    if len(toks) < 2:
        raise DataError("perplexity needs at least two tokens")
    if word_filter is None:
        scored = np.ones(len(toks), dtype=bool)
    else:
        scored = np.asarray([w != "<bos>" and word_filter(w) for w in words], dtype=bool)
    nll_sum = 0.0
    n = 0
    chunks = []
    for s in range(0, len(toks) - 1, ctx):
        chunks.append(s)
    with torch.no_grad():
        for i in range(0, len(chunks), batch_chunks):
            group = chunks[i: i + batch_chunks]
            rows_x, rows_y, rows_m = [], [], []
            for s in group:
                e = min(s + ctx, len(toks) - 1)
                rows_x.append(toks[s:e])
                rows_y.append(toks[s + 1: e + 1])
                rows_m.append(scored[s + 1: e + 1])
            T = max(len(r) for r in rows_x)
            B = len(rows_x)
            xi = np.zeros((B, T), dtype=np.int64)
            yi = np.zeros((B, T), dtype=np.int64)
            mi = np.zeros((B, T), dtype=bool)
            for b, (rx, ry, rm) in enumerate(zip(rows_x, rows_y, rows_m)):
                xi[b, : len(rx)] = rx
                yi[b, : len(ry)] = ry
                mi[b, : len(rm)] = rm
            logits, _ = forward_lm(state, torch.from_numpy(xi))
            nll = F.cross_entropy(logits.reshape(-1, logits.shape[-1]),
                                  torch.from_numpy(yi).reshape(-1), reduction="none")
            m = torch.from_numpy(mi).reshape(-1).to(nll.dtype)
            nll_sum += float((nll * m).sum())
            n += int(m.sum())
    if n == 0:
        raise DataError("no scored positions under the given word filter")
    return {"ppl": math.exp(nll_sum / n), "nll_sum": nll_sum, "n_tokens": float(n)}


# ==== statement scoring and knowledge probes ====

def statement_logliks(state: ModelState, vocab: Vocab, texts: list[str]) -> np.ndarray:
    """Unnormalized log-likelihood of each statement, conditioned on <bos>."""
    enc = [encode_with_spans(vocab, t)[0] for t in texts]
    if any(len(e) == 0 for e in enc):
        raise DataError("cannot score an empty statement")
    B = len(enc)
    T = max(len(e) for e in enc)
    xi = np.zeros((B, T), dtype=np.int64)
    yi = np.zeros((B, T), dtype=np.int64)
    mi = np.zeros((B, T), dtype=bool)
    for b, e in enumerate(enc):
        row = [vocab.bos_id] + e[:-1]
        xi[b, : len(e)] = row
        yi[b, : len(e)] = e
        mi[b, : len(e)] = True
    valid = torch.from_numpy(mi)
    causal = torch.tril(torch.ones((T, T), dtype=torch.bool))
    attn = (causal.unsqueeze(0) & valid.unsqueeze(1)).unsqueeze(1)
    with torch.no_grad():
        logits, _ = forward_lm(state, torch.from_numpy(xi), attn_mask=attn)
        nll = F.cross_entropy(logits.reshape(-1, logits.shape[-1]),
                              torch.from_numpy(yi).reshape(-1), reduction="none")
        nll = nll.reshape(B, T) * valid.to(nll.dtype)
    return (-nll.sum(dim=1)).numpy()


def statement_loglik(state: ModelState, vocab: Vocab, text: str) -> float:
    return float(statement_logliks(state, vocab, [text])[0])


def lm_scorer(state: ModelState, vocab: Vocab, probe_batch: int = 32) -> ScoreFn:
    def fn(texts: list[str]) -> np.ndarray:
        out = []
        for i in range(0, len(texts), probe_batch):
            out.append(statement_logliks(state, vocab, texts[i: i + probe_batch]))
        return np.concatenate(out)
    return fn


def random_scorer(seed: int) -> ScoreFn:
    """Statement-content-hashed random scores; a calibration floor."""
    def fn(texts: list[str]) -> np.ndarray:
        return np.asarray([rng(seed, "random-scorer", t).random() for t in texts])
    return fn


def oracle_scorer(probes: Iterable[ProbeItem], marker: str | None = None) -> ScoreFn:
    """Scores 1 for true statements, 0 otherwise; a calibration ceiling."""
    truths = set()
    for p in probes:
        truths.add(render_statement(p.subject, p.relation, p.true_object))
        if marker:
            truths.add(render_probe(p, clone=True, marker=marker)[0])
    def fn(texts: list[str]) -> np.ndarray:
        return np.asarray([1.0 if t in truths else 0.0 for t in texts])
    return fn


def clka_probe(probes: list[ProbeItem], score_fn: ScoreFn,
               clone: bool = False, marker: str | None = None) -> dict[str, float]:
    """Accuracy of ranking the true statement strictly above all distractors."""
    if not probes:
        raise DataError("no probes to score")
    texts: list[str] = []
    sizes: list[int] = []
    for p in probes:
        stmts = render_probe(p, clone=clone, marker=marker)
        texts.extend(stmts)
        sizes.append(len(stmts))
    scores = score_fn(texts)
    correct = 0
    off = 0
    for k in sizes:
        s = scores[off: off + k]
        if s[0] > s[1:].max():
            correct += 1
        off += k
    return {"accuracy": correct / len(sizes), "n": float(len(sizes))}


# ==== alignment tracking ====

def embedding_alignment_score(state: ModelState, vocab: Vocab,
                              pairs: list[tuple[str, str]],
                              max_pairs: int | None = None,
                              seed: int = 0) -> float:
    """Mean input-embedding cosine over aligned word pairs."""
    if not pairs:
        raise DataError("no pairs to score")
    if max_pairs is not None and len(pairs) > max_pairs:
        idx = rng(seed, "align-score").choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[int(i)] for i in idx]
    emb = state.params["tok_emb"].detach()
    cos = []
    for a, b in pairs:
        ia, _ = encode_with_spans(vocab, a)
        ib, _ = encode_with_spans(vocab, b)
        va = emb[torch.tensor(ia)].mean(dim=0)
        vb = emb[torch.tensor(ib)].mean(dim=0)
        cos.append(float(F.cosine_similarity(va, vb, dim=0)))
    return float(np.mean(cos))


# ==== generation leakage ====

def leak_ratio(state: ModelState, vocab: Vocab, prompts: list[list[int]],
               max_new_tokens: int, seed: int, leak_ids: frozenset[int],
               temperature: float = 1.0, batch: int = 64) -> dict[str, float]:
    """Fraction of sampled continuations containing any leak-set token.

    Prompts must share one token length so continuations advance in
    lockstep; a sampled <bos> ends that continuation.
    """
    if not prompts:
        raise DataError("no prompts to continue")
    k = len(prompts[0])
    if any(len(p) != k for p in prompts):
        raise DataError("prompts must share one token length")
    if k + max_new_tokens > state.config.ctx:
        raise DataError("prompt plus continuation exceeds the context window")
    n_leaked = 0
    with torch.no_grad():
        for i in range(0, len(prompts), batch):
            rows = prompts[i: i + batch]
            g = rng(seed, "leak", i)
            ids = torch.tensor(rows, dtype=torch.long)
            B = ids.shape[0]
            alive = np.ones(B, dtype=bool)
            leaked = np.zeros(B, dtype=bool)
            for _ in range(max_new_tokens):
                logits, _ = forward_lm(state, ids)
                probs = F.softmax(logits[:, -1] / temperature, dim=-1).double().numpy()
                probs /= probs.sum(axis=1, keepdims=True)
                u = g.random((B, 1))
                nxt = (probs.cumsum(axis=1) < u).sum(axis=1)
                nxt = np.minimum(nxt, probs.shape[1] - 1)
                stop = nxt == vocab.bos_id
                hit = np.asarray([int(t) in leak_ids for t in nxt])
                leaked |= alive & ~stop & hit
                alive &= ~stop
                if not alive.any():
                    break
                ids = torch.cat([ids, torch.from_numpy(nxt).unsqueeze(1)], dim=1)
            n_leaked += int(leaked.sum())
    return {"leak_ratio": n_leaked / len(prompts), "n": float(len(prompts)),
            "n_leaked": float(n_leaked)}


def clone_token_ids(vocab: Vocab) -> frozenset[int]:
    m = vocab.marker
    if not m:
        raise DataError("vocabulary has no clone marker configured")
    return frozenset(i for i, t in enumerate(vocab.tokens) if t.endswith(m))


def make_prompts(vocab: Vocab, docs: list[str], prompt_len: int, n: int,
                 seed: int) -> list[list[int]]:
    """Fixed-length prompts cut from document starts, cycling the corpus."""
    pool: list[list[int]] = []
    for d in docs:
        ids, _ = encode_with_spans(vocab, d)
        if len(ids) >= prompt_len:
            pool.append([vocab.bos_id] + ids[: prompt_len - 1])
    if not pool:
        raise DataError(f"no document provides a {prompt_len}-token prompt")
    g = rng(seed, "prompts")
    idx = g.integers(len(pool), size=n)
    return [pool[int(i)] for i in idx]
