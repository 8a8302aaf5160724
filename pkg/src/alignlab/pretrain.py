"""Main pretraining loop.

Consumes a fixed schedule period by period: each scheduled document is
codeswitched with its own derived seed, packed into context-length chunks
behind a <bos> separator, and clipped at the period's exact token budget.
Checkpoints land at period boundaries only, so a resumed run re-enters at
a boundary and replays the remaining periods identically.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np
import torch

from .codeswitch import codeswitch_augment
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, NumericalError
from .knowledge import KnowledgeTriplet, docs_for_period
from .metrics import MetricsWriter
from .model import ModelState, loss_lm
from .optim import AdamConfig, AdamState, adam_step, clip_gradients, cosine_lr, zero_grads
from .schedule import EXEMPT_TAG, Schedule
from .seeding import rng
from .tokenizer import Vocab


@dataclass
class RunConfig:
    seed: int
    codeswitch_mode: str = "input_only"  # off | vanilla | input_only
    codeswitch_ratio: float = 0.05
    bidirectional: bool = True
    adam: AdamConfig = field(default_factory=AdamConfig)


@dataclass(frozen=True)
class RunVariant:
    """A named configuration in the standard comparison set."""

    name: str
    schedule_mode: str
    codeswitch_mode: str
    init: str  # "random" | "stage1"


def baseline_runs() -> list[RunVariant]:
    return [
        RunVariant("only_tgt", "only_tgt", "off", "random"),
        RunVariant("full_tgt", "full_tgt", "off", "random"),
        RunVariant("joint", "joint", "off", "random"),
        RunVariant("prealign", "joint", "input_only", "stage1"),
        RunVariant("prealign_vanilla_cs", "joint", "vanilla", "stage1"),
    ]


def _resolve_doc(source: str, index: int, period: int,
                 corpora: dict[str, list[str]],
                 knowledge_cache: dict[int, list[str]],
                 triplets: list[KnowledgeTriplet]) -> str:
    if source == "knowledge":
        if period not in knowledge_cache:
            knowledge_cache[period] = docs_for_period(triplets, period)
        return knowledge_cache[period][index]
    try:
        return corpora[source][index]
    except (KeyError, IndexError) as e:
        raise DataError(f"schedule references missing doc {source}[{index}]") from e


def _period_arrays(schedule: Schedule, period: int, first_doc: int, vocab: Vocab,
                   corpora: dict[str, list[str]], triplets: list[KnowledgeTriplet],
                   mapping: dict[str, str], cfg: RunConfig,
                   knowledge_cache: dict[int, list[str]],
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Token/target/mask arrays for one period, clipped to its budget."""
    need = schedule.tokens_per_period + 1
    toks: list[np.ndarray] = []
    tgts: list[np.ndarray] = []
    scd: list[np.ndarray] = []
    got = 0
    doc_counter = first_doc
    bos = np.asarray([vocab.bos_id], dtype=np.int64)
    bos_m = np.asarray([True])
    while doc_counter < len(schedule.docs) and schedule.docs[doc_counter].period == period:
        d = schedule.docs[doc_counter]
        text = _resolve_doc(d.source, d.index, period, corpora, knowledge_cache, triplets)
        g = rng(cfg.seed, "codeswitch", doc_counter)
        batch = codeswitch_augment(vocab, text, mapping, cfg.codeswitch_ratio,
                                   cfg.codeswitch_mode, g,
                                   exempt=EXEMPT_TAG in d.tags)
        toks.extend([bos, batch.tokens])
        tgts.extend([bos, batch.target_of])
        scd.extend([bos_m, batch.scored])
        got += len(batch.tokens) + 1
        doc_counter += 1
        if got >= need:
            break
    while doc_counter < len(schedule.docs) and schedule.docs[doc_counter].period == period:
        doc_counter += 1
    if got < need - 1:
        raise DataError(f"period {period} provides {got} tokens, "
                        f"needs {need - 1}")
    tokens = np.concatenate(toks)[:need]
    targets = np.concatenate(tgts)[:need]
    scored = np.concatenate(scd)[:need]
    if len(tokens) == need - 1:
        tokens = np.concatenate([tokens, bos])
        targets = np.concatenate([targets, bos])
        scored = np.concatenate([scored, bos_m])
    return tokens, targets, scored, doc_counter


def _latest_checkpoint(workdir: str) -> str | None:
    cdir = os.path.join(workdir, "checkpoints")
    if not os.path.isdir(cdir):
        return None
    best = None
    best_step = -1
    for name in os.listdir(cdir):
        m = re.fullmatch(r"step-(\d+)", name)
        if m and int(m.group(1)) > best_step:
            best_step = int(m.group(1))
            best = os.path.join(cdir, name)
    return best


def run_pretrain(workdir: str, state: ModelState, vocab: Vocab, schedule: Schedule,
                 corpora: dict[str, list[str]], triplets: list[KnowledgeTriplet],
                 mapping: dict[str, str], cfg: RunConfig,
                 eval_fn=None, resume: bool = False) -> ModelState:
    """Train over the schedule, logging metrics and checkpointing per period.

    With resume=True and a checkpoint present, training re-enters at the
    last completed period boundary and the metrics log is truncated to
    match; the finished run is byte-identical to an uninterrupted one.
    """
    ctx = state.config.ctx
    if schedule.tokens_per_step % ctx != 0:
        raise ConfigError("tokens_per_step must be a multiple of the context length")
    chunks_per_step = schedule.tokens_per_step // ctx
    os.makedirs(os.path.join(workdir, "checkpoints"), exist_ok=True)

    opt = AdamState()
    start_period = 0
    resume_step = None
    if resume:
        latest = _latest_checkpoint(workdir)
        if latest is not None:
            state, opt = load_checkpoint(latest)
            if state.step % schedule.steps_per_period != 0:
                raise DataError(f"checkpoint step {state.step} is not a period boundary")
            start_period = state.step // schedule.steps_per_period
            resume_step = state.step
    total_steps = schedule.total_steps

    # Schedule docs are ordered by period; find each period's first index.
    period_start = {}
    for i, d in enumerate(schedule.docs):
        period_start.setdefault(d.period, i)

    knowledge_cache: dict[int, list[str]] = {}
    writer = MetricsWriter(os.path.join(workdir, "metrics.jsonl"), resume_step)
    try:
        for period in range(start_period, schedule.periods):
            first_doc = period_start.get(period)
            if first_doc is None:
                raise DataError(f"schedule has no documents for period {period}")
            tokens, targets, scored, _ = _period_arrays(
                schedule, period, first_doc, vocab, corpora, triplets,
                mapping, cfg, knowledge_cache)
            for _ in range(schedule.steps_per_period):
                xs, ys, ms = [], [], []
                base = (state.step - period * schedule.steps_per_period) * schedule.tokens_per_step
                for j in range(chunks_per_step):
                    off = base + j * ctx
                    xs.append(tokens[off: off + ctx])
                    ys.append(targets[off + 1: off + ctx + 1])
                    ms.append(scored[off + 1: off + ctx + 1])
                xi = torch.from_numpy(np.stack(xs))
                yi = torch.from_numpy(np.stack(ys))
                mi = torch.from_numpy(np.stack(ms))
                zero_grads(state.params)
                loss = loss_lm(state, xi, yi, mi)
                if not torch.isfinite(loss):
                    raise NumericalError(f"non-finite loss at step {state.step}")
                loss.backward()
                clip_gradients(state.params, cfg.adam.clip_norm)
                lr = cosine_lr(state.step, total_steps, cfg.adam.lr_max, cfg.adam.lr_min)
                adam_step(state.params, opt, cfg.adam, lr)
                writer.write({"step": state.step,
                              "loss": round(float(loss.detach()), 6),
                              "lr": round(lr, 10)})
                state.step += 1
            if eval_fn is not None:
                for rec in eval_fn(state, period):
                    writer.write({"step": state.step - 1, "event": "period_eval",
                                  "period": period, **rec})
            save_checkpoint(os.path.join(workdir, "checkpoints", f"step-{state.step:06d}"),
                            state, opt)
    finally:
        writer.close()
    return state
