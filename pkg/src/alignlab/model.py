"""Decoder-only transformer language model.

Parameters live in a flat name-to-tensor dict so checkpointing, the
hand-rolled optimizer, and finite-difference checking can treat the model
as a pure function of its weights. Pre-norm blocks, learned positions,
untied input/output embeddings by default.

Word representations are taken at every depth: layer 0 is the token
embedding (position-free), layers 1..L are the block outputs, and layer
L+1 is the output-embedding row; each is mean-pooled over the word's
subword tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError, NumericalError

torch.set_num_threads(1)


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    ctx: int = 128
    d_ff: int = 0
    tied_embeddings: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if self.d_ff == 0:
            self.d_ff = 4 * self.d_model
        if self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be divisible by n_heads")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32


@dataclass
class ModelState:
    config: ModelConfig
    params: dict[str, torch.Tensor]
    step: int = 0

    @property
    def n_rep_layers(self) -> int:
        return self.config.n_layers + 2


@dataclass
class LayerReps:
    """Mean-pooled word vectors, one per representation layer."""

    vectors: torch.Tensor  # [n_layers + 2, d_model]


def param_names(config: ModelConfig) -> list[str]:
    names = ["tok_emb", "pos_emb"]
    for l in range(config.n_layers):
        names += [
            f"h{l}.ln1.w", f"h{l}.ln1.b",
            f"h{l}.attn.wqkv", f"h{l}.attn.bqkv",
            f"h{l}.attn.wo", f"h{l}.attn.bo",
            f"h{l}.ln2.w", f"h{l}.ln2.b",
            f"h{l}.mlp.w1", f"h{l}.mlp.b1",
            f"h{l}.mlp.w2", f"h{l}.mlp.b2",
        ]
    names += ["ln_f.w", "ln_f.b"]
    if not config.tied_embeddings:
        names.append("out_emb")
    return names


def _shape(config: ModelConfig, name: str) -> tuple[int, ...]:
    d, ff, v = config.d_model, config.d_ff, config.vocab_size
    if name in ("tok_emb", "out_emb"):
        return (v, d)
    if name == "pos_emb":
        return (config.ctx, d)
    leaf = name.split(".", 1)[1] if name.startswith("h") else name
    return {
        "ln1.w": (d,), "ln1.b": (d,), "ln2.w": (d,), "ln2.b": (d,),
        "ln_f.w": (d,), "ln_f.b": (d,),
        "attn.wqkv": (d, 3 * d), "attn.bqkv": (3 * d,),
        "attn.wo": (d, d), "attn.bo": (d,),
        "mlp.w1": (d, ff), "mlp.b1": (ff,),
        "mlp.w2": (ff, d), "mlp.b2": (d,),
    }[leaf]


def init_state(config: ModelConfig, seed: int) -> ModelState:
    g = torch.Generator().manual_seed(int(seed) & 0x7FFF_FFFF_FFFF_FFFF)
    dt = config.torch_dtype
    params: dict[str, torch.Tensor] = {}
    for name in param_names(config):
        shape = _shape(config, name)
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("b", "bqkv", "bo", "b1", "b2"):
            t = torch.zeros(shape, dtype=dt)
        elif leaf == "w" and name.startswith(("h", "ln_f")):
            t = torch.ones(shape, dtype=dt)
        else:
            std = 0.02
            if leaf in ("wo", "w2"):
                # Residual-branch outputs scaled down with depth.
                std = 0.02 / math.sqrt(2 * config.n_layers)
            t = torch.empty(shape, dtype=dt).normal_(0.0, std, generator=g)
        t.requires_grad_(True)
        params[name] = t
    return ModelState(config, params)


def _ln(x: torch.Tensor, w: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return F.layer_norm(x, (x.shape[-1],), w, b)


def _block(p: dict[str, torch.Tensor], l: int, x: torch.Tensor, n_heads: int,
           attn_mask: torch.Tensor | None, causal: bool) -> torch.Tensor:
    B, T, d = x.shape
    hd = d // n_heads
    h = _ln(x, p[f"h{l}.ln1.w"], p[f"h{l}.ln1.b"])
    qkv = h @ p[f"h{l}.attn.wqkv"] + p[f"h{l}.attn.bqkv"]
    q, k, v = qkv.split(d, dim=-1)
    q = q.view(B, T, n_heads, hd).transpose(1, 2)
    k = k.view(B, T, n_heads, hd).transpose(1, 2)
    v = v.view(B, T, n_heads, hd).transpose(1, 2)
    a = F.scaled_dot_product_attention(q, k, v, attn_mask=attn_mask,
                                       is_causal=causal and attn_mask is None)
    a = a.transpose(1, 2).reshape(B, T, d)
    x = x + a @ p[f"h{l}.attn.wo"] + p[f"h{l}.attn.bo"]
    h = _ln(x, p[f"h{l}.ln2.w"], p[f"h{l}.ln2.b"])
    h = F.gelu(h @ p[f"h{l}.mlp.w1"] + p[f"h{l}.mlp.b1"])
    return x + h @ p[f"h{l}.mlp.w2"] + p[f"h{l}.mlp.b2"]


def output_matrix(state: ModelState) -> torch.Tensor:
    return state.params["tok_emb"] if state.config.tied_embeddings else state.params["out_emb"]


def forward_lm(state: ModelState, ids: torch.Tensor,
               collect_layers: bool = False,
               attn_mask: torch.Tensor | None = None,
               ) -> tuple[torch.Tensor, list[torch.Tensor]]:
    """Logits [B, T, V] and, when asked, per-layer hidden states.

    The collected list has n_layers + 1 entries: the position-free token
    embedding, then each block output. Output-embedding rows are the final
    representation layer and are looked up separately.
    """
    cfg = state.config
    p = state.params
    B, T = ids.shape
    if T > cfg.ctx:
        raise ConfigError(f"sequence length {T} exceeds context {cfg.ctx}")
    emb = p["tok_emb"][ids]
    layers = [emb] if collect_layers else []
    x = emb + p["pos_emb"][:T]
    for l in range(cfg.n_layers):
        x = _block(p, l, x, cfg.n_heads, attn_mask, causal=True)
        if collect_layers:
            layers.append(x)
    h = _ln(x, p["ln_f.w"], p["ln_f.b"])
    logits = h @ output_matrix(state).T
    return logits, layers


def nll_terms(state: ModelState, inputs: torch.Tensor, targets: torch.Tensor,
              mask: torch.Tensor | None = None) -> tuple[torch.Tensor, torch.Tensor]:
    """(sum of negative log-likelihood over scored positions, scored count)."""
    logits, _ = forward_lm(state, inputs)
    nll = F.cross_entropy(logits.reshape(-1, logits.shape[-1]),
                          targets.reshape(-1), reduction="none")
    if mask is None:
        return nll.sum(), torch.tensor(float(nll.numel()), dtype=nll.dtype)
    m = mask.reshape(-1).to(nll.dtype)
    return (nll * m).sum(), m.sum()


def loss_lm(state: ModelState, inputs: torch.Tensor, targets: torch.Tensor,
            mask: torch.Tensor | None = None) -> torch.Tensor:
    """Mean next-token loss over scored positions."""
    s, n = nll_terms(state, inputs, targets, mask)
    if float(n) == 0.0:
        raise NumericalError("loss over an empty position mask")
    return s / n


def _pad_batch(word_ids: list[list[int]], dtype=torch.long) -> tuple[torch.Tensor, torch.Tensor]:
    B = len(word_ids)
    T = max(len(w) for w in word_ids)
    ids = torch.zeros((B, T), dtype=dtype)
    valid = torch.zeros((B, T), dtype=torch.bool)
    for i, w in enumerate(word_ids):
        ids[i, : len(w)] = torch.tensor(w, dtype=dtype)
        valid[i, : len(w)] = True
    return ids, valid


def encode_word_batch(state: ModelState, word_ids: list[list[int]]) -> torch.Tensor:
    """Per-layer mean-pooled vectors for a batch of words: [B, L+2, d].

    Each word is run as its own short sequence; padding is masked out of
    both attention and pooling.
    """
    if any(len(w) == 0 for w in word_ids):
        raise ConfigError("cannot encode an empty word")
    cfg = state.config
    p = state.params
    ids, valid = _pad_batch(word_ids)
    B, T = ids.shape
    causal = torch.tril(torch.ones((T, T), dtype=torch.bool))
    attn_mask = (causal.unsqueeze(0) & valid.unsqueeze(1)).unsqueeze(1)
    emb = p["tok_emb"][ids]
    w = valid.unsqueeze(-1).to(emb.dtype)
    n = w.sum(dim=1)
    pooled = [(emb * w).sum(dim=1) / n]
    x = emb + p["pos_emb"][:T]
    for l in range(cfg.n_layers):
        x = _block(p, l, x, cfg.n_heads, attn_mask, causal=False)
        pooled.append((x * w).sum(dim=1) / n)
    out_rows = output_matrix(state)[ids]
    pooled.append((out_rows * w).sum(dim=1) / n)
    return torch.stack(pooled, dim=1)


def encode_word(state: ModelState, ids: list[int]) -> LayerReps:
    return LayerReps(encode_word_batch(state, [ids])[0])


def sample_generate(state: ModelState, prompt_ids: list[int], max_new_tokens: int,
                    gen: np.random.Generator, temperature: float = 1.0,
                    stop_ids: tuple[int, ...] = ()) -> list[int]:
    """Sample a continuation; the draw comes from the supplied generator."""
    if temperature <= 0:
        raise ConfigError("temperature must be positive")
    out: list[int] = []
    ids = list(prompt_ids)
    with torch.no_grad():
        for _ in range(max_new_tokens):
            window = ids[-state.config.ctx:]
            logits, _ = forward_lm(state, torch.tensor([window], dtype=torch.long))
            probs = F.softmax(logits[0, -1] / temperature, dim=-1)
            pv = probs.double().numpy()
            pv = pv / pv.sum()
            nxt = int(gen.choice(len(pv), p=pv))
            if nxt in stop_ids:
                break
            out.append(nxt)
            ids.append(nxt)
    return out


def clone_params(params: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    out = {}
    for k, v in params.items():
        t = v.detach().clone()
        t.requires_grad_(True)
        out[k] = t
    return out
