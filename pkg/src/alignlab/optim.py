"""Hand-rolled AdamW with decoupled weight decay and a cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .errors import NumericalError


@dataclass
class AdamConfig:
    lr_max: float = 3e-4
    lr_min: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float = 1.0


@dataclass
class AdamState:
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)
    t: int = 0


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """Cosine decay from lr_max to lr_min over total_steps."""
    if total_steps <= 1:
        return lr_max
    frac = min(max(step / (total_steps - 1), 0.0), 1.0)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * frac))


def clip_gradients(params: dict[str, torch.Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    sq = 0.0
    for p in params.values():
        if p.grad is not None:
            sq += float((p.grad.detach() ** 2).sum())
    norm = math.sqrt(sq)
    if not math.isfinite(norm):
        raise NumericalError("non-finite gradient norm")
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad.detach().mul_(scale)
    return norm


def adam_step(params: dict[str, torch.Tensor], opt: AdamState, cfg: AdamConfig,
              lr: float) -> None:
    """One AdamW update in place; decay applies to matrices only."""
    opt.t += 1
    t = opt.t
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    with torch.no_grad():
        for name, p in params.items():
            if p.grad is None:
                continue
            g = p.grad
            if name not in opt.m:
                opt.m[name] = torch.zeros_like(p)
                opt.v[name] = torch.zeros_like(p)
            m, v = opt.m[name], opt.v[name]
            m.mul_(b1).add_(g, alpha=1.0 - b1)
            v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
            if cfg.weight_decay > 0 and p.dim() >= 2:
                p.mul_(1.0 - lr * cfg.weight_decay)
            denom = (v / bc2).sqrt_().add_(cfg.eps)
            p.addcdiv_(m, denom, value=-lr / bc1)


def zero_grads(params: dict[str, torch.Tensor]) -> None:
    for p in params.values():
        p.grad = None
