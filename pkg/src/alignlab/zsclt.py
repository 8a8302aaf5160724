"""Zero-shot cross-lingual transfer task.

A binary classification probe built from the corpus generator's noun
categories: a sentence names two nouns and the label says whether they
belong to the same category. The probe head is a linear layer over frozen
mean-pooled final-layer features, trained on base-language examples only
and evaluated on both languages; the clone-side accuracy measures how much
task ability transfers with no clone supervision at all.

Only the head is trained, so two inputs with identical features are
guaranteed identical predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .clone import clone_text
from .errors import DataError
from .model import ModelState, _ln, forward_lm
from .seeding import rng
from .textgen import NOUN_CATEGORIES
from .tokenizer import Vocab, encode_with_spans


@dataclass
class ZscltTask:
    train_texts: list[str]
    train_labels: np.ndarray
    test_texts: list[str]
    test_labels: np.ndarray


def _example(gen: np.random.Generator) -> tuple[str, int]:
    cats = sorted(NOUN_CATEGORIES)
    same = int(gen.integers(2))
    c1 = cats[int(gen.integers(len(cats)))]
    if same:
        c2 = c1
        n1, n2 = gen.choice(len(NOUN_CATEGORIES[c1]), size=2, replace=False)
        w1, w2 = NOUN_CATEGORIES[c1][int(n1)], NOUN_CATEGORIES[c1][int(n2)]
    else:
        c2 = c1
        while c2 == c1:
            c2 = cats[int(gen.integers(len(cats)))]
        w1 = NOUN_CATEGORIES[c1][int(gen.integers(len(NOUN_CATEGORIES[c1])))]
        w2 = NOUN_CATEGORIES[c2][int(gen.integers(len(NOUN_CATEGORIES[c2])))]
    return f"the {w1} and the {w2} .", same


def zsclt_make_task(n_train: int, n_test: int, seed: int) -> ZscltTask:
    gen = rng(seed, "zsclt", "task")
    seen: set[str] = set()
    def draw(n: int) -> tuple[list[str], np.ndarray]:
        texts, labels = [], []
        guard = 0
        while len(texts) < n:
            t, y = _example(gen)
            guard += 1
            if t in seen and guard < 50 * n:
                continue
            seen.add(t)
            texts.append(t)
            labels.append(y)
        return texts, np.asarray(labels, dtype=np.int64)
    tr_t, tr_y = draw(n_train)
    te_t, te_y = draw(n_test)
    return ZscltTask(tr_t, tr_y, te_t, te_y)


def sentence_features(state: ModelState, vocab: Vocab, texts: list[str],
                      batch: int = 64) -> torch.Tensor:
    """Mean-pooled normalized final-layer states, one row per sentence."""
    p = state.params
    out = []
    with torch.no_grad():
        for i in range(0, len(texts), batch):
            group = texts[i: i + batch]
            enc = [encode_with_spans(vocab, t)[0] for t in group]
            if any(not e for e in enc):
                raise DataError("cannot featurize an empty sentence")
            B = len(enc)
            T = max(len(e) for e in enc)
            xi = np.zeros((B, T), dtype=np.int64)
            mi = np.zeros((B, T), dtype=bool)
            for b, e in enumerate(enc):
                xi[b, : len(e)] = e
                mi[b, : len(e)] = True
            valid = torch.from_numpy(mi)
            causal = torch.tril(torch.ones((T, T), dtype=torch.bool))
            attn = (causal.unsqueeze(0) & valid.unsqueeze(1)).unsqueeze(1)
            _, layers = forward_lm(state, torch.from_numpy(xi),
                                   collect_layers=True, attn_mask=attn)
            h = _ln(layers[-1], p["ln_f.w"], p["ln_f.b"])
            w = valid.unsqueeze(-1).to(h.dtype)
            out.append((h * w).sum(dim=1) / w.sum(dim=1))
    return torch.cat(out, dim=0)


def _train_head(feats: torch.Tensor, labels: np.ndarray, seed: int,
                steps: int = 300, lr: float = 0.05) -> tuple[torch.Tensor, torch.Tensor]:
    g = torch.Generator().manual_seed(seed & 0x7FFF_FFFF_FFFF_FFFF)
    d = feats.shape[1]
    w = torch.empty((d, 2), dtype=feats.dtype).normal_(0, 0.02, generator=g)
    b = torch.zeros(2, dtype=feats.dtype)
    w.requires_grad_(True)
    b.requires_grad_(True)
    y = torch.from_numpy(labels)
    x = feats.detach()
    for _ in range(steps):
        logits = x @ w + b
        loss = F.cross_entropy(logits, y)
        loss.backward()
        with torch.no_grad():
            w -= lr * w.grad
            b -= lr * b.grad
        w.grad = None
        b.grad = None
    return w.detach(), b.detach()


def zsclt_train_eval(state: ModelState, vocab: Vocab, task: ZscltTask,
                     seed: int, marker: str | None = None) -> dict[str, float]:
    """Train the head on base-language features, test on both languages."""
    marker = marker or vocab.marker
    if not marker:
        raise DataError("clone marker required for the transfer split")
    tr = sentence_features(state, vocab, task.train_texts)
    w, b = _train_head(tr, task.train_labels, seed)
    def acc(texts: list[str], labels: np.ndarray) -> float:
        f = sentence_features(state, vocab, texts)
        pred = (f @ w + b).argmax(dim=1).numpy()
        return float((pred == labels).mean())
    base_acc = acc(task.test_texts, task.test_labels)
    clone_acc = acc([clone_text(t, marker) for t in task.test_texts], task.test_labels)
    train_acc = acc(task.train_texts, task.train_labels)
    return {"base_acc": base_acc, "clone_acc": clone_acc, "train_acc": train_acc}
