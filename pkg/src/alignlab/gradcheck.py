"""Finite-difference gradient verification.

Central differences in double precision against autograd, on sampled
entries of every parameter tensor. Any loss expressible as a function of
a ModelState can be checked; the standard battery covers the full LM
loss, the masked LM loss, and the contrastive alignment loss.
"""

from __future__ import annotations

from collections.abc import Callable

import torch

from .errors import ConfigError
from .model import ModelState
from .optim import zero_grads
from .seeding import rng


def grad_check(state: ModelState, loss_fn: Callable[[ModelState], torch.Tensor],
               eps: float = 1e-5, samples_per_tensor: int = 4,
               seed: int = 0) -> dict[str, float]:
    """Max relative error between analytic and numerical gradients.

    rel = |a - f| / max(|a|, |f|, 1), normalized so tiny gradients do not
    blow the ratio up on rounding noise.
    """
    if state.config.dtype != "float64":
        raise ConfigError("gradient checking requires a float64 model")
    zero_grads(state.params)
    loss = loss_fn(state)
    loss.backward()
    worst = 0.0
    worst_name = ""
    g = rng(seed, "gradcheck")
    with torch.no_grad():
        for name, p in state.params.items():
            if p.grad is None:
                continue
            flat = p.view(-1)
            gflat = p.grad.view(-1)
            n = flat.numel()
            k = min(samples_per_tensor, n)
            idx = g.choice(n, size=k, replace=False)
            for i in idx:
                i = int(i)
                orig = float(flat[i])
                flat[i] = orig + eps
                lp = float(loss_fn(state))
                flat[i] = orig - eps
                lm = float(loss_fn(state))
                flat[i] = orig
                fd = (lp - lm) / (2.0 * eps)
                an = float(gflat[i])
                rel = abs(an - fd) / max(abs(an), abs(fd), 1.0)
                if rel > worst:
                    worst = rel
                    worst_name = f"{name}[{i}]"
    zero_grads(state.params)
    return {"max_rel_err": worst, "worst_entry": worst_name}
