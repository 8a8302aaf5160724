"""Pretraining data schedule.

A schedule fixes, ahead of training, which document is consumed when. Time
is divided into equal periods; each period mixes base-language documents,
a small clone-language share, and that period's knowledge statements, then
shuffles deterministically. Clone documents are kept contiguous in blocks
of roughly clone_block_tokens: the synthetic documents are a couple of
dozen tokens each, and scattering them one by one would never give the
model a context window that is actually in the clone language. The trainer
packs documents in schedule order and clips each period at its exact token
budget, so a schedule plus a seed fully determines every training batch.

Manifest rows are one line per scheduled document:
    start_step <TAB> end_step <TAB> source <TAB> doc_index <TAB> n_tokens <TAB> tags
with a single header line carrying the period geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DataError
from .knowledge import KnowledgeTriplet, docs_for_period
from .seeding import rng
from .tokenizer import Vocab, encode_with_spans

EXEMPT_TAG = "exempt"

MODES = ("joint", "only_tgt", "full_tgt")


@dataclass(frozen=True)
class ScheduledDoc:
    period: int
    source: str
    index: int
    n_tokens: int
    tags: tuple[str, ...] = ()


@dataclass
class Schedule:
    periods: int
    steps_per_period: int
    tokens_per_step: int
    docs: list[ScheduledDoc]

    @property
    def total_steps(self) -> int:
        return self.periods * self.steps_per_period

    @property
    def tokens_per_period(self) -> int:
        return self.steps_per_period * self.tokens_per_step


def _doc_len(vocab: Vocab, text: str) -> int:
    # +1 for the <bos> separator the packer inserts before every document.
    ids, _ = encode_with_spans(vocab, text)
    return len(ids) + 1


def _draw_without_replacement(order: list[int], cursor: int, need: int, lens: list[int],
                              source: str) -> tuple[list[tuple[int, int]], int]:
    out: list[tuple[int, int]] = []
    got = 0
    while got < need:
        if cursor >= len(order):
            raise DataError(
                f"{source} corpus exhausted: needed {need} more tokens with "
                f"{len(order) - cursor} documents left"
            )
        i = order[cursor]
        cursor += 1
        out.append((i, lens[i]))
        got += lens[i]
    return out, cursor


def build_pretrain_schedule(
    base_docs: list[str],
    clone_docs: list[str],
    triplets: list[KnowledgeTriplet],
    vocab: Vocab,
    periods: int,
    steps_per_period: int,
    tokens_per_step: int,
    clone_ratio: float,
    seed: int,
    mode: str = "joint",
    clone_block_tokens: int = 1024,
) -> Schedule:
    if mode not in MODES:
        raise DataError(f"unknown schedule mode {mode!r}")
    if periods < 1 or steps_per_period < 1 or tokens_per_step < 1:
        raise DataError("schedule geometry must be positive")
    if not 0.0 <= clone_ratio < 1.0:
        raise DataError(f"clone_ratio must be in [0, 1), got {clone_ratio}")
    if clone_block_tokens < 1:
        raise DataError("clone_block_tokens must be positive")
    # clone-only modes never touch base documents; skip measuring them
    base_lens = ([] if mode in ("only_tgt", "full_tgt")
                 else [_doc_len(vocab, d) for d in base_docs])
    clone_lens = [_doc_len(vocab, d) for d in clone_docs]
    p_tokens = steps_per_period * tokens_per_step

    base_order = list(rng(seed, "schedule", "base-order").permutation(len(base_docs)))
    base_cursor = 0
    clone_order = list(rng(seed, "schedule", "clone-order", 0).permutation(len(clone_docs)))
    clone_cursor = 0
    clone_cycle = 0

    scheduled: list[ScheduledDoc] = []
    for period in range(periods):
        entries: list[ScheduledDoc] = []
        if mode == "only_tgt":
            # Clone corpus only, each document at most once. The budget must
            # fit inside the corpus; pick steps_per_period accordingly.
            drawn, clone_cursor = _draw_without_replacement(
                clone_order, clone_cursor, p_tokens, clone_lens, "clone")
            for i, n in drawn:
                entries.append(ScheduledDoc(period, "clone", int(i), n))
        elif mode == "full_tgt":
            # Clone corpus only, cycled with a fresh shuffle per pass until
            # the full budget is covered.
            got = 0
            while got < p_tokens:
                if clone_cursor >= len(clone_order):
                    clone_cycle += 1
                    clone_order = list(
                        rng(seed, "schedule", "clone-order", clone_cycle)
                        .permutation(len(clone_docs))
                    )
                    clone_cursor = 0
                i = clone_order[clone_cursor]
                clone_cursor += 1
                entries.append(ScheduledDoc(period, "clone", int(i), clone_lens[i]))
                got += clone_lens[i]
        else:
            kdocs = docs_for_period(triplets, period)
            k_total = 0
            for ki, kd in enumerate(kdocs):
                n = _doc_len(vocab, kd)
                entries.append(ScheduledDoc(period, "knowledge", ki, n, (EXEMPT_TAG,)))
                k_total += n
            c_need = round(p_tokens * clone_ratio)
            drawn, clone_cursor = _draw_without_replacement(
                clone_order, clone_cursor, c_need, clone_lens, "clone")
            for i, n in drawn:
                entries.append(ScheduledDoc(period, "clone", int(i), n))
            c_total = sum(n for _, n in drawn)
            b_need = p_tokens - k_total - c_total
            if b_need < 0:
                raise DataError("period budget smaller than its knowledge docs")
            drawn, base_cursor = _draw_without_replacement(
                base_order, base_cursor, b_need, base_lens, "base")
            for i, n in drawn:
                entries.append(ScheduledDoc(period, "base", int(i), n))

        # Shuffle, then make sure the document clipped at the period edge is
        # a base document so knowledge and clone content is never cut.
        for attempt in range(100):
            g = rng(seed, "schedule", "shuffle", period, attempt)
            perm = g.permutation(len(entries))
            shuffled = [entries[int(j)] for j in perm]
            cum = 0
            straddler = None
            for e in shuffled:
                if cum < p_tokens < cum + e.n_tokens:
                    straddler = e
                    break
                cum += e.n_tokens
            if straddler is None or straddler.source == "base" or mode != "joint":
                entries = shuffled
                break
        else:
            entries = shuffled
        scheduled.extend(entries)

    return Schedule(periods, steps_per_period, tokens_per_step, scheduled)


def save_schedule(path, schedule: Schedule) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# periods={schedule.periods} steps_per_period={schedule.steps_per_period} "
                f"tokens_per_step={schedule.tokens_per_step}\n")
        tps = schedule.tokens_per_step
        spp = schedule.steps_per_period
        cum: dict[int, int] = {}
        for d in schedule.docs:
            start_tok = cum.get(d.period, 0)
            cum[d.period] = start_tok + d.n_tokens
            base_step = d.period * spp
            start = base_step + min(start_tok // tps, spp - 1)
            end = base_step + min((cum[d.period] - 1) // tps, spp - 1)
            tags = ",".join(d.tags) if d.tags else "-"
            f.write(f"{start}\t{end}\t{d.source}\t{d.index}\t{d.n_tokens}\t{tags}\n")


def load_schedule(path) -> Schedule:
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise DataError(f"{path}: missing schedule header")
    head = dict(kv.split("=") for kv in lines[0].lstrip("# ").split())
    try:
        periods = int(head["periods"])
        spp = int(head["steps_per_period"])
        tps = int(head["tokens_per_step"])
    except (KeyError, ValueError) as e:
        raise DataError(f"{path}: bad schedule header: {e}") from e
    docs = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 6:
            raise DataError(f"{path}:{ln}: expected 6 tab-separated fields")
        start, _end, source, index, n_tokens, tags = parts
        tagt = () if tags == "-" else tuple(tags.split(","))
        docs.append(ScheduledDoc(int(start) // spp, source, int(index),
                                 int(n_tokens), tagt))
    return Schedule(periods, spp, tps, docs)
