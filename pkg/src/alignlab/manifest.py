"""Run manifest: one JSON file that pins an entire run.

Everything a training command needs — data paths, model shape, schedule
geometry, alignment settings, the root seed — lives in the manifest, so a
run is reproducible from the file alone and two runs from identical
manifests produce identical logs. Paths are resolved relative to the
manifest's own directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

from .aligntable import (AlignmentTable, from_clone_map, load_table, select_beta,
                         word_frequencies)
from .clone import clone_map_from_vocab
from .errors import ConfigError, DataError
from .knowledge import KnowledgeTriplet, all_statement_docs, load_knowledge
from .model import ModelConfig, ModelState, init_state
from .optim import AdamConfig
from .prealign import PreAlignConfig
from .pretrain import RunConfig
from .schedule import Schedule, build_pretrain_schedule
from .seeding import child_seed
from .textgen import read_corpus
from .tokenizer import Vocab, load_vocab


@dataclass
class RunManifest:
    seed: int
    base_corpus: str
    clone_corpus: str
    vocab: str
    marker: str = "§"
    knowledge: str = ""
    table: str = ""           # empty: derive the full table from the vocab
    init_checkpoint: str = ""  # empty: random init
    schedule_mode: str = "joint"
    periods: int = 4
    steps_per_period: int = 250
    tokens_per_step: int = 2048
    clone_ratio: float = 0.01
    codeswitch_mode: str = "input_only"
    codeswitch_ratio: float = 0.05
    bidirectional: bool = True
    beta: float = 1.0
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    ctx: int = 128
    d_ff: int = 0
    tied_embeddings: bool = False
    lr_max: float = 3e-4
    lr_min: float = 3e-5
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    align_tau: float = 0.1
    align_include_self: bool = True
    align_steps: int = 300
    align_pair_batch: int = 128
    align_lr: float = 1.5e-3
    align_lm_tokens_per_step: int = 1024
    align_data_fraction: float = 0.05

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, d_model=self.d_model,
                           n_layers=self.n_layers, n_heads=self.n_heads,
                           ctx=self.ctx, d_ff=self.d_ff,
                           tied_embeddings=self.tied_embeddings)

    def adam_config(self) -> AdamConfig:
        return AdamConfig(lr_max=self.lr_max, lr_min=self.lr_min,
                          weight_decay=self.weight_decay, clip_norm=self.clip_norm)

    def run_config(self) -> RunConfig:
        return RunConfig(seed=self.seed, codeswitch_mode=self.codeswitch_mode,
                         codeswitch_ratio=self.codeswitch_ratio,
                         bidirectional=self.bidirectional, adam=self.adam_config())

    def prealign_config(self) -> PreAlignConfig:
        return PreAlignConfig(steps=self.align_steps, pair_batch=self.align_pair_batch,
                              tau=self.align_tau, include_self=self.align_include_self,
                              lr=self.align_lr,
                              lm_tokens_per_step=self.align_lm_tokens_per_step,
                              data_fraction=self.align_data_fraction,
                              clip_norm=self.clip_norm)


_REQUIRED = ("seed", "base_corpus", "clone_corpus", "vocab")


def load_manifest(path: str) -> RunManifest:
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise DataError(f"{path}: manifest must be a JSON object")
    known = {f.name for f in fields(RunManifest)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise DataError(f"{path}: unknown manifest keys: {', '.join(unknown)}")
    missing = sorted(k for k in _REQUIRED if k not in raw)
    if missing:
        raise DataError(f"{path}: missing manifest keys: {', '.join(missing)}")
    m = RunManifest(**raw)
    base = os.path.dirname(os.path.abspath(path))
    for attr in ("base_corpus", "clone_corpus", "vocab", "knowledge", "table",
                 "init_checkpoint"):
        v = getattr(m, attr)
        if v and not os.path.isabs(v):
            setattr(m, attr, os.path.join(base, v))
    return m


def save_manifest(path: str, m: RunManifest) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(asdict(m), f, sort_keys=True, indent=1)
        f.write("\n")


@dataclass
class PreparedRun:
    """Loaded artifacts shared by the training and eval entry points."""

    manifest: RunManifest
    vocab: Vocab
    base_docs: list[str]
    clone_docs: list[str]
    triplets: list[KnowledgeTriplet]
    table: AlignmentTable          # full table
    selected: AlignmentTable       # beta-selected subset
    model_cfg: ModelConfig = field(init=False)

    def __post_init__(self):
        self.model_cfg = self.manifest.model_config(len(self.vocab))


def prepare_run(m: RunManifest) -> PreparedRun:
    vocab = load_vocab(m.vocab, marker=m.marker)
    base_docs = read_corpus(m.base_corpus)
    clone_docs = read_corpus(m.clone_corpus)
    triplets = load_knowledge(m.knowledge) if m.knowledge else []
    if m.table:
        table = load_table(m.table)
    else:
        table = from_clone_map(vocab, clone_map_from_vocab(vocab))
    freq_docs = base_docs + (all_statement_docs(triplets) if triplets else [])
    selected = select_beta(table, m.beta, word_frequencies(freq_docs))
    return PreparedRun(m, vocab, base_docs, clone_docs, triplets, table, selected)


def build_schedule(prep: PreparedRun) -> Schedule:
    m = prep.manifest
    return build_pretrain_schedule(
        prep.base_docs, prep.clone_docs, prep.triplets, prep.vocab,
        periods=m.periods, steps_per_period=m.steps_per_period,
        tokens_per_step=m.tokens_per_step, clone_ratio=m.clone_ratio,
        seed=m.seed, mode=m.schedule_mode)


def init_model(prep: PreparedRun) -> ModelState:
    return init_state(prep.model_cfg, child_seed(prep.manifest.seed, "init"))


def apply_variant(m: RunManifest, variant: str) -> RunManifest:
    """Preset schedule/codeswitch/init fields for a named comparison run."""
    presets = {
        "only_tgt": dict(schedule_mode="only_tgt", codeswitch_mode="off"),
        "full_tgt": dict(schedule_mode="full_tgt", codeswitch_mode="off"),
        "joint": dict(schedule_mode="joint", codeswitch_mode="off"),
        "prealign": dict(schedule_mode="joint", codeswitch_mode="input_only"),
        "prealign_vanilla_cs": dict(schedule_mode="joint", codeswitch_mode="vanilla"),
    }
    if variant not in presets:
        raise ConfigError(f"unknown run variant {variant!r}")
    out = RunManifest(**{**asdict(m), **presets[variant]})
    return out


# Manifest files double as run configs; both names are in use.
load_config = load_manifest
