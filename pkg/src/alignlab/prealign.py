"""Alignment stage: contrastive objective and the stage-1 training loop.

Before main pretraining, word translations from the alignment table are
pulled together with a contrastive loss applied at every representation
layer, jointly with the LM objective on a small fixed slice of the
pretraining data. The result is a checkpoint whose embeddings already
align across languages; main pretraining then starts from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .aligntable import AlignmentTable, sample_pair_batch
from .clone import CloneMap
from .errors import ConfigError, NumericalError
from .model import ModelState, encode_word_batch, loss_lm, output_matrix
from .optim import AdamConfig, AdamState, adam_step, clip_gradients, zero_grads
from .seeding import rng
from .tokenizer import Vocab, encode_with_spans


@dataclass
class PreAlignConfig:
    steps: int = 300
    pair_batch: int = 128
    tau: float = 0.1
    include_self: bool = True
    lr: float = 1.5e-3
    lm_tokens_per_step: int = 1024
    data_fraction: float = 0.05
    clip_norm: float = 1.0


def contrastive_layer_loss(x: torch.Tensor, y: torch.Tensor, tau: float,
                           include_self: bool = True) -> torch.Tensor:
    """Contrastive loss for one representation layer.

    x, y: [B, d] vectors for source anchors and their translations. Each
    anchor scores its own translation against every translation in the
    batch plus, by default, the anchor itself; similarities are cosine,
    scaled by 1/tau.
    """
    if tau <= 0:
        raise ConfigError("tau must be positive")
    xn = F.normalize(x, dim=-1)
    yn = F.normalize(y, dim=-1)
    sims = (xn @ yn.T) / tau  # [B, B], row i: anchor i vs all translations
    pos = sims.diagonal()
    if include_self:
        self_col = torch.full_like(pos, 1.0 / tau).unsqueeze(1)
        denom = torch.logsumexp(torch.cat([sims, self_col], dim=1), dim=1)
    else:
        denom = torch.logsumexp(sims, dim=1)
    return (denom - pos).mean()


def align_loss_all_layers(state: ModelState, pairs: list[tuple[list[int], list[int]]],
                          tau: float, include_self: bool = True) -> torch.Tensor:
    """Sum of the layer losses over all n_layers + 2 representation layers."""
    xs = encode_word_batch(state, [p[0] for p in pairs])
    ys = encode_word_batch(state, [p[1] for p in pairs])
    total = xs.new_zeros(())
    for l in range(xs.shape[1]):
        total = total + contrastive_layer_loss(xs[:, l], ys[:, l], tau, include_self)
    return total


def perfect_align_init(state: ModelState, clone_map: CloneMap) -> ModelState:
    """Copy base embedding rows onto their clone counterparts in place.

    After this, a clone document is processed by exactly the same numbers
    as its base original; it is the upper bound the learned alignment is
    compared against.
    """
    with torch.no_grad():
        emb = state.params["tok_emb"]
        out = output_matrix(state)
        for b, c in clone_map.pairs():
            emb[c] = emb[b]
            if out is not emb:
                out[c] = out[b]
    return state


def stage1_slice(docs: list[str], fraction: float, seed: int) -> list[str]:
    """Deterministic slice of roughly `fraction` of the corpus tokens."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"data fraction must be in (0, 1], got {fraction}")
    order = rng(seed, "prealign", "slice").permutation(len(docs))
    budget = fraction * sum(d.count(" ") + 1 for d in docs)
    out: list[str] = []
    got = 0.0
    for i in order:
        if got >= budget:
            break
        out.append(docs[int(i)])
        got += docs[int(i)].count(" ") + 1
    return out


class _ChunkCycler:
    """Cycles fixed-length LM chunks from packed documents, reshuffling per pass."""

    def __init__(self, docs: list[str], vocab: Vocab, ctx: int, seed: int):
        stream: list[int] = []
        for d in docs:
            stream.append(vocab.bos_id)
            ids, _ = encode_with_spans(vocab, d)
            stream.extend(ids)
        n = (len(stream) - 1) // ctx
        if n == 0:
            raise ConfigError("stage-1 slice smaller than one context window")
        self.stream = np.asarray(stream, dtype=np.int64)
        self.ctx = ctx
        self.n = n
        self.seed = seed
        self.epoch = 0
        self.order = rng(seed, "prealign", "chunks", 0).permutation(n)
        self.pos = 0

    def next_batch(self, n_chunks: int) -> tuple[torch.Tensor, torch.Tensor]:
        xs, ys = [], []
        for _ in range(n_chunks):
            if self.pos >= self.n:
                self.epoch += 1
                self.order = rng(self.seed, "prealign", "chunks", self.epoch).permutation(self.n)
                self.pos = 0
            c = int(self.order[self.pos]) * self.ctx
            self.pos += 1
            xs.append(self.stream[c: c + self.ctx])
            ys.append(self.stream[c + 1: c + self.ctx + 1])
        return (torch.from_numpy(np.stack(xs)), torch.from_numpy(np.stack(ys)))


def joint_step(state: ModelState, opt: AdamState, adam_cfg: AdamConfig,
               cfg: PreAlignConfig, lm_inputs: torch.Tensor, lm_targets: torch.Tensor,
               pairs: list[tuple[list[int], list[int]]], lr: float) -> dict[str, float]:
    """One optimizer step on L_align + L_LM."""
    zero_grads(state.params)
    l_lm = loss_lm(state, lm_inputs, lm_targets)
    l_align = align_loss_all_layers(state, pairs, cfg.tau, cfg.include_self)
    loss = l_align + l_lm
    if not torch.isfinite(loss):
        raise NumericalError(f"non-finite joint loss at step {state.step}")
    loss.backward()
    clip_gradients(state.params, cfg.clip_norm)
    adam_step(state.params, opt, adam_cfg, lr)
    state.step += 1
    return {"loss_lm": float(l_lm.detach()), "loss_align": float(l_align.detach())}


def run_prealign(state: ModelState, table: AlignmentTable, vocab: Vocab,
                 docs: list[str], cfg: PreAlignConfig, seed: int,
                 on_step=None) -> list[dict[str, float]]:
    """Stage-1 loop over a prepared data slice; returns per-step records."""
    adam_cfg = AdamConfig(lr_max=cfg.lr, lr_min=cfg.lr, clip_norm=cfg.clip_norm)
    opt = AdamState()
    cycler = _ChunkCycler(docs, vocab, state.config.ctx, seed)
    n_chunks = max(1, cfg.lm_tokens_per_step // state.config.ctx)
    records = []
    for step in range(cfg.steps):
        pairs = sample_pair_batch(table, vocab, cfg.pair_batch,
                                  rng(seed, "prealign", "pairs", step))
        xi, yi = cycler.next_batch(n_chunks)
        losses = joint_step(state, opt, adam_cfg, cfg, xi, yi, pairs, cfg.lr)
        rec = {"step": step, **losses}
        records.append(rec)
        if on_step is not None:
            on_step(rec)
    return records
