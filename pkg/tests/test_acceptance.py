"""End-to-end acceptance checks.

Each test here verifies one shipped guarantee at a reduced but realistic
scale: gradient correctness, codeswitch factorization, contrastive hand
values, clone symmetry, alignment strength after the injection stage, the
headline training comparisons, generation leakage, probe calibration, and
run determinism. Heavy corpora, the alignment stage, and the seven
training runs are built once per module and shared across criteria.

The whole module takes a few hours; everything in it is deterministic.
"""

import itertools
import math
import os
import shutil
import signal
import subprocess
import sys
import time

import numpy as np
import pytest
import torch

from alignlab.aligntable import (AlignmentTable, from_clone_map, select_beta,
                                 word_frequencies)
from alignlab.clone import build_clone_map, clone_text
from alignlab.codeswitch import build_switch_mapping, codeswitch_augment, lm_triple
from alignlab.evalsuite import (clka_probe, clone_token_ids,
                                embedding_alignment_score, leak_ratio,
                                lm_scorer, make_prompts, oracle_scorer,
                                perplexity, random_scorer, statement_logliks)
from alignlab.gradcheck import grad_check
from alignlab.knowledge import (all_statement_docs, build_probes,
                                generate_knowledge_set)
from alignlab.model import ModelConfig, init_state, loss_lm
from alignlab.optim import AdamConfig
from alignlab.prealign import (PreAlignConfig, align_loss_all_layers,
                               contrastive_layer_loss, perfect_align_init,
                               run_prealign, stage1_slice)
from alignlab.pretrain import RunConfig, run_pretrain
from alignlab.schedule import build_pretrain_schedule
from alignlab.seeding import rng
from alignlab.textgen import generate_corpus
from alignlab.tokenizer import BOS, PAD, UNK, Vocab, encode_word, train_vocab
from alignlab.checkpoint import load_checkpoint, save_checkpoint
from alignlab.zsclt import zsclt_make_task, zsclt_train_eval

from conftest import record_criterion
from oracles import codeswitch_terms_oracle, terms_from_triple

pytestmark = pytest.mark.slow

# Evaluation geometry: 20M base tokens against a 100x smaller clone corpus,
# four knowledge periods of 250 steps. Small enough for one CPU, large
# enough that the trained comparisons separate cleanly; the clone share of
# the mixed runs (~164k tokens) is what calibrates clone-language output.
BASE_TOKENS = 20_000_000
CLONE_SRC_TOKENS = 200_000
TEST_TOKENS = 40_000
MAX_WORD_VOCAB = 6_000
LEVELS = (1, 4, 16, 64)
N_PER_LEVEL = 8
PERIODS = 4
STEPS_PER_PERIOD = 250
TOKENS_PER_STEP = 16_384
CLONE_RATIO = 0.01
CS_RATIO = 0.05
BETAS = (0.25, 0.5, 0.75, 1.0)
# The clone-only baseline sees each clone document once, so its step budget
# is bounded by the clone corpus: 4 periods x 3 x 16384 tokens just fit.
ONLY_TGT_SPP = 3

D_MODEL, N_LAYERS, N_HEADS, CTX = 128, 4, 4, 128
INIT_SEED = 7
TRAIN_SEED = 110

LEAK_PROMPTS = 5_000
LEAK_PROMPT_LEN = 8
LEAK_MAX_NEW = 16


def _criterion(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num:02d}: {'PASS' if ok else 'FAIL'} - {detail}"
    record_criterion(line)
    assert ok, line


def _beta_name(beta: float) -> str:
    return f"b{int(round(beta * 100)):03d}"


# ==== shared heavyweight fixtures ====

class World:
    pass


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def world(ws):
    w = World()
    w.base_docs = generate_corpus(BASE_TOKENS, seed=101)
    clone_src = generate_corpus(CLONE_SRC_TOKENS, seed=102)
    w.base_test = generate_corpus(TEST_TOKENS, seed=103)
    w.triplets = generate_knowledge_set(PERIODS, N_PER_LEVEL, LEVELS, seed=104)
    w.stmt_docs = all_statement_docs(w.triplets)

    # Entity names must land in the word vocabulary, so the statements are
    # part of the vocabulary training corpus.
    base_vocab = train_vocab(w.base_docs + w.stmt_docs, MAX_WORD_VOCAB)
    w.vocab, w.cmap = build_clone_map(base_vocab)
    marker = w.vocab.marker
    w.clone_docs = [clone_text(d, marker) for d in clone_src]
    w.clone_test = [clone_text(d, marker) for d in w.base_test]

    w.table = from_clone_map(w.vocab, w.cmap)
    freqs = word_frequencies(w.base_docs + w.stmt_docs)
    w.selected = {b: select_beta(w.table, b, freqs) for b in BETAS}
    w.probes = build_probes(w.triplets, seed=106)
    w.model_cfg = ModelConfig(vocab_size=len(w.vocab.tokens), d_model=D_MODEL,
                              n_layers=N_LAYERS, n_heads=N_HEADS, ctx=CTX)
    w.corpora = {"base": w.base_docs, "clone": w.clone_docs}
    w.sched_joint = build_pretrain_schedule(
        w.base_docs, w.clone_docs, w.triplets, w.vocab, PERIODS,
        STEPS_PER_PERIOD, TOKENS_PER_STEP, CLONE_RATIO, seed=105, mode="joint")
    w.sched_only = build_pretrain_schedule(
        w.base_docs, w.clone_docs, w.triplets, w.vocab, PERIODS,
        ONLY_TGT_SPP, TOKENS_PER_STEP, CLONE_RATIO, seed=105, mode="only_tgt")
    return w


@pytest.fixture(scope="module")
def stage1(world, ws):
    """Alignment-stage checkpoints for every dictionary budget."""
    cfg = PreAlignConfig()
    slice_docs = (stage1_slice(world.base_docs, cfg.data_fraction, 108)
                  + stage1_slice(world.clone_docs, cfg.data_fraction, 108))
    out = {"paths": {}, "records": {}}
    t0 = time.monotonic()
    for beta in BETAS:
        st = init_state(world.model_cfg, seed=INIT_SEED)
        recs = run_prealign(st, world.selected[beta], world.vocab,
                            slice_docs, cfg, seed=109)
        path = str(ws / f"stage1-{_beta_name(beta)}")
        save_checkpoint(path, st)
        out["paths"][beta] = path
        out["records"][beta] = recs
    out["duration"] = time.monotonic() - t0
    return out


_VARIANTS = {
    # name: (stage1 beta or None for random init, schedule mode, codeswitch mode)
    "joint": (None, "joint", "off"),
    "only_tgt": (None, "only_tgt", "off"),
    "prealign": (1.0, "joint", "input_only"),
    "prealign_vanilla": (1.0, "joint", "vanilla"),
    "prealign_b025": (0.25, "joint", "input_only"),
    "prealign_b050": (0.5, "joint", "input_only"),
    "prealign_b075": (0.75, "joint", "input_only"),
}


@pytest.fixture(scope="module")
def pretrained(world, stage1, ws):
    """Final model states for all seven training variants."""
    states = {}
    for name, (beta, sched_mode, cs_mode) in _VARIANTS.items():
        if beta is None:
            st = init_state(world.model_cfg, seed=INIT_SEED)
        else:
            st, _ = load_checkpoint(stage1["paths"][beta])
            st.step = 0
        sched = world.sched_joint if sched_mode == "joint" else world.sched_only
        mapping = ({} if cs_mode == "off"
                   else build_switch_mapping(world.selected[beta], bidirectional=True))
        cfg = RunConfig(seed=TRAIN_SEED, codeswitch_mode=cs_mode,
                        codeswitch_ratio=CS_RATIO, adam=AdamConfig())
        wd = str(ws / f"run-{name}")
        states[name] = run_pretrain(wd, st, world.vocab, sched, world.corpora,
                                    world.triplets, mapping, cfg)
        # only the final states are compared; per-period checkpoints are bulky
        shutil.rmtree(os.path.join(wd, "checkpoints"), ignore_errors=True)
    return states


@pytest.fixture(scope="module")
def clone_ppl(world, pretrained):
    return {name: perplexity(st, world.vocab, world.clone_test)
            for name, st in pretrained.items()}


# ==== criterion 1: analytic gradients match finite differences ====

def test_c01_gradcheck_all_losses():
    t0 = time.monotonic()
    cfg = ModelConfig(vocab_size=32, d_model=16, n_layers=2, n_heads=2,
                      ctx=16, dtype="float64")
    g = torch.Generator().manual_seed(5)
    ids = torch.randint(0, 32, (2, 12), generator=g)
    x, y = ids[:, :-1], ids[:, 1:]
    mask = torch.zeros_like(y, dtype=torch.bool)
    mask[0, 2] = mask[0, 7] = mask[1, 4] = True
    pairs = [([3], [4]), ([5, 6], [7]), ([8], [9, 10]), ([11, 12, 13], [14, 15])]

    errs = {}
    for label, fn in (
        ("lm", lambda s: loss_lm(s, x, y)),
        ("masked_lm", lambda s: loss_lm(s, x, y, mask=mask)),
        ("contrastive", lambda s: align_loss_all_layers(s, pairs, tau=0.1)),
    ):
        st = init_state(cfg, seed=3)
        errs[label] = grad_check(st, fn, samples_per_tensor=3, seed=1)["max_rel_err"]
    took = time.monotonic() - t0
    ok = all(e < 1e-4 for e in errs.values()) and took < 60.0
    detail = ", ".join(f"{k} {v:.2e}" for k, v in errs.items())
    _criterion(1, ok, f"max rel grad err: {detail} (tol 1e-4); {took:.1f}s (limit 60s)")


# ==== criterion 2: codeswitch streams factorize exactly as the oracle says ====

def test_c02_codeswitch_matches_oracle():
    toks = (PAD, BOS, UNK, "w", "t", "a", "##b", "##c", "d", "##e", "##f",
            "k1", "k2")
    vocab = Vocab(tokens=toks, marker="§")
    base_by_len = {1: "w", 2: "ab", 3: "abc"}
    trans_by_len = {1: "t", 2: "de", 3: "def"}
    cells = itertools.product(range(3), (1, 2, 3), (1, 2, 3),
                              ("vanilla", "input_only"))
    checked = 0
    bad = []
    for pos, wlen, tlen, mode in cells:
        word, trans = base_by_len[wlen], trans_by_len[tlen]
        words = ["k1", "k2", "k1"]
        words[pos] = word
        batch = codeswitch_augment(vocab, " ".join(words), {word: trans},
                                   ratio=1.0, mode=mode,
                                   gen=np.random.default_rng(0))
        word_tokens = [encode_word(vocab, w) for w in words]
        stream, want = codeswitch_terms_oracle(
            word_tokens, {pos: encode_word(vocab, trans)}, mode)
        got = terms_from_triple(*lm_triple(batch))
        if list(batch.tokens) != stream or got != want:
            bad.append((pos, wlen, tlen, mode))
        checked += 1
    ok = checked == 54 and not bad
    _criterion(2, ok, f"{checked - len(bad)}/{checked} grid cells match "
                      f"the independent factorization oracle; mismatches: {bad}")


# ==== criterion 3: contrastive loss reproduces hand-computed values ====

def test_c03_contrastive_hand_values():
    one = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    l_ident = float(contrastive_layer_loss(one, one.clone(), tau=1.0))
    d_ident = abs(l_ident - math.log(2.0))

    eye = torch.eye(2, dtype=torch.float64)
    l_ortho = float(contrastive_layer_loss(eye, eye.clone(), tau=1.0))
    want = -math.log(math.e / (2.0 * math.e + 1.0))
    d_ortho = abs(l_ortho - want)

    g = torch.Generator().manual_seed(11)
    xs = torch.randn(8, 16, generator=g, dtype=torch.float64)
    ys = torch.randn(8, 16, generator=g, dtype=torch.float64)
    d_scale = abs(float(contrastive_layer_loss(xs * 37.0, ys * 1e-2, tau=0.07))
                  - float(contrastive_layer_loss(xs, ys, tau=0.07)))

    ok = d_ident <= 1e-6 and d_ortho <= 1e-6 and d_scale <= 1e-6
    _criterion(3, ok, f"identical-pair err {d_ident:.2e}, orthonormal err "
                      f"{d_ortho:.2e}, scale-invariance err {d_scale:.2e} (tol 1e-6)")


# ==== criterion 4: copied embeddings make the clone language free ====

def test_c04_perfect_init_is_language_blind(world):
    st = perfect_align_init(init_state(world.model_cfg, seed=INIT_SEED),
                            world.cmap)
    pb = perplexity(st, world.vocab, world.base_test)
    pc = perplexity(st, world.vocab, world.clone_test)
    d_nll = abs(pb["nll_sum"] / pb["n_tokens"] - pc["nll_sum"] / pc["n_tokens"])

    # the guarantee is per document, not just on corpus aggregates
    some = world.base_test[:200]
    lb = statement_logliks(st, world.vocab, some)
    lc = statement_logliks(st, world.vocab, world.clone_test[:200])
    d_doc = float(np.max(np.abs(lb - lc)))

    task = zsclt_make_task(512, 256, seed=12)
    res = zsclt_train_eval(st, world.vocab, task, seed=13,
                           marker=world.vocab.marker)
    ok = (d_nll <= 1e-5 and d_doc <= 1e-5
          and res["clone_acc"] == res["base_acc"])
    _criterion(4, ok, f"per-token nll gap {d_nll:.2e}, worst per-doc gap "
                      f"{d_doc:.2e} over 200 docs (tol 1e-5); transfer acc "
                      f"base {res['base_acc']:.4f} vs clone {res['clone_acc']:.4f} "
                      f"(must be equal)")


# ==== criterion 5: the alignment stage actually aligns ====

def test_c05_stage1_alignment_strength(world, stage1):
    pairs = [(e.source, e.translation) for e in world.selected[1.0].entries]
    st, _ = load_checkpoint(stage1["paths"][1.0])
    aligned = embedding_alignment_score(st, world.vocab, pairs)
    rand = embedding_alignment_score(init_state(world.model_cfg, seed=INIT_SEED),
                                     world.vocab, pairs)
    took = stage1["duration"]
    ok = aligned >= 0.8 and abs(rand) < 0.1 and took <= 900.0
    _criterion(5, ok, f"mean pair cosine {aligned:.3f} (need >= 0.8), random init "
                      f"{rand:+.3f} (need |.| < 0.1); four runs took {took:.0f}s "
                      f"(limit 900s)")


# ==== criterion 6: clone perplexity ordering across training recipes ====

def test_c06_clone_perplexity_ordering(clone_ppl):
    pa = clone_ppl["prealign"]["ppl"]
    jt = clone_ppl["joint"]["ppl"]
    ot = clone_ppl["only_tgt"]["ppl"]
    ok = pa <= 0.95 * jt and jt < ot
    _criterion(6, ok, f"clone ppl: prealign {pa:.2f} vs joint {jt:.2f} "
                      f"(need >= 5% lower) vs only-target {ot:.2f} "
                      f"(joint must beat it)")


# ==== criterion 7: cross-lingual knowledge application ====

def _clka_by_level(world, st) -> dict[int, float]:
    score = lm_scorer(st, world.vocab)
    by_level: dict[int, list] = {lv: [] for lv in LEVELS}
    for t, p in zip(world.triplets, world.probes):
        by_level[t.frequency].append(p)
    return {lv: clka_probe(ps, score, clone=True, marker=world.vocab.marker)["accuracy"]
            for lv, ps in by_level.items()}


def test_c07_clka_transfer(world, pretrained):
    acc_j = _clka_by_level(world, pretrained["joint"])
    acc_p = _clka_by_level(world, pretrained["prealign"])
    n_lv = len(LEVELS)
    overall_j = sum(acc_j.values()) / n_lv
    overall_p = sum(acc_p.values()) / n_lv
    gaps = {lv: acc_p[lv] - acc_j[lv] for lv in LEVELS}
    top = max(LEVELS)
    ok = (0.15 <= overall_j <= 0.35
          and overall_p >= overall_j + 0.10
          and gaps[top] >= max(gaps[lv] for lv in LEVELS if lv != top))
    by_lv = ", ".join(f"L{lv}: {acc_j[lv]:.2f}->{acc_p[lv]:.2f}" for lv in LEVELS)
    _criterion(7, ok, f"clone probe acc joint {overall_j:.3f} (need 0.25 +/- 0.10), "
                      f"prealign {overall_p:.3f} (need joint + 0.10); per level "
                      f"{by_lv}; gap must peak at L{top}")


# ==== criterion 8: input-only codeswitching does not leak at generation ====

def test_c08_generation_leak(world, pretrained):
    prompts = make_prompts(world.vocab, world.base_test, LEAK_PROMPT_LEN,
                           LEAK_PROMPTS, seed=801)
    leak_ids = clone_token_ids(world.vocab)
    res_io = leak_ratio(pretrained["prealign"], world.vocab, prompts,
                        LEAK_MAX_NEW, seed=802, leak_ids=leak_ids)
    res_v = leak_ratio(pretrained["prealign_vanilla"], world.vocab, prompts,
                       LEAK_MAX_NEW, seed=802, leak_ids=leak_ids)
    io, va = res_io["leak_ratio"], res_v["leak_ratio"]
    ok = (res_io["n"] >= LEAK_PROMPTS and va >= 10.0 * io and io < 0.005)
    _criterion(8, ok, f"leak over {int(res_io['n'])} continuations: input-only "
                      f"{io:.4%} (need < 0.5%), vanilla {va:.4%} "
                      f"(need >= 10x input-only)")


# ==== criterion 9: partial dictionaries help and more never hurts ====

def test_c09_partial_dictionary(world, pretrained, clone_ppl):
    seen = frozenset(e.translation for e in world.selected[0.25].entries)
    unseen = lambda w: w not in seen
    up_25 = perplexity(pretrained["prealign_b025"], world.vocab,
                       world.clone_test, word_filter=unseen)["ppl"]
    up_jt = perplexity(pretrained["joint"], world.vocab,
                       world.clone_test, word_filter=unseen)["ppl"]

    order = ["prealign_b025", "prealign_b050", "prealign_b075", "prealign"]
    ppls = [clone_ppl[n]["ppl"] for n in order]
    monotone = all(ppls[i + 1] <= 1.02 * ppls[i] for i in range(len(ppls) - 1))
    ok = (ppls[0] < clone_ppl["joint"]["ppl"] and up_25 < up_jt and monotone)
    chain = " -> ".join(f"{p:.2f}" for p in ppls)
    _criterion(9, ok, f"beta=0.25 clone ppl {ppls[0]:.2f} vs joint "
                      f"{clone_ppl['joint']['ppl']:.2f}; unseen-word ppl {up_25:.2f} "
                      f"vs joint {up_jt:.2f}; betas {BETAS} give {chain} "
                      f"(each step within +2%)")


# ==== criterion 10: probe scorers are calibrated ====

def test_c10_scorer_calibration():
    trip = generate_knowledge_set(1, 250, (1, 2, 3, 4), seed=901)
    probes = build_probes(trip, seed=902)
    r = clka_probe(probes, random_scorer(7))["accuracy"]
    ob = clka_probe(probes, oracle_scorer(probes))["accuracy"]
    oc = clka_probe(probes, oracle_scorer(probes, marker="§"),
                    clone=True, marker="§")["accuracy"]
    ok = len(probes) >= 1000 and abs(r - 0.25) <= 0.04 and ob == 1.0 and oc == 1.0
    _criterion(10, ok, f"random scorer {r:.3f} over {len(probes)} probes "
                       f"(need 0.25 +/- 0.04); oracle base {ob:.2f}, "
                       f"clone {oc:.2f} (need 1.0)")


# ==== criterion 11: byte-identical reruns and crash recovery ====

def _cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "alignlab.cli", *args],
                          cwd=cwd, capture_output=True, text=True)


def _read(path):
    with open(path, "rb") as f:
        return f.read()


def test_c11_determinism_and_resume(tmp_path):
    d = tmp_path
    for args in (
        ["gen-corpus", "--tokens", "40000", "--seed", "31", "--out", "base.txt"],
        ["gen-corpus", "--tokens", "6000", "--seed", "32", "--out", "tgt.txt"],
        ["synth-clone", "--input", "tgt.txt", "--out", "clone.txt"],
        ["gen-knowledge", "--periods", "4", "--per-level", "1", "--levels", "1,2",
         "--seed", "33", "--out", "knowledge.tsv", "--docs-out", "stmts.txt"],
        ["build-vocab", "--corpus", "base.txt", "stmts.txt",
         "--max-word-vocab", "3000", "--out", "vocab.txt"],
    ):
        r = _cli(args, d)
        assert r.returncode == 0, r.stderr

    manifest = {
        "seed": 17, "base_corpus": "base.txt", "clone_corpus": "clone.txt",
        "vocab": "vocab.txt", "knowledge": "knowledge.tsv",
        "periods": 4, "steps_per_period": 25, "tokens_per_step": 256,
        "clone_ratio": 0.05, "ctx": 64, "d_model": 32, "n_layers": 1,
        "n_heads": 2,
    }
    import json
    (d / "run.json").write_text(json.dumps(manifest), encoding="utf-8")
    r = _cli(["schedule", "--manifest", "run.json", "--out", "sched.tsv"], d)
    assert r.returncode == 0, r.stderr

    base_args = ["pretrain", "--manifest", "run.json", "--schedule", "sched.tsv"]
    for wd in ("A", "B"):
        r = _cli(base_args + ["--workdir", wd], d)
        assert r.returncode == 0, r.stderr
    final = "checkpoints/step-000100/tensors.bin"
    rerun_ok = (_read(d / "A/metrics.jsonl") == _read(d / "B/metrics.jsonl")
                and _read(d / "A" / final) == _read(d / "B" / final))

    # crash recovery: kill the trainer shortly after its first checkpoint,
    # then resume; the finished run must be indistinguishable from A
    proc = subprocess.Popen([sys.executable, "-m", "alignlab.cli",
                             *base_args, "--workdir", "C"],
                            cwd=d, stdout=subprocess.DEVNULL,
                            stderr=subprocess.DEVNULL)
    first = d / "C/checkpoints/step-000025/manifest.json"
    deadline = time.monotonic() + 300
    while not first.exists() and proc.poll() is None:
        if time.monotonic() > deadline:
            proc.kill()
            pytest.fail("first checkpoint never appeared")
        time.sleep(0.02)
    killed_midrun = proc.poll() is None
    if killed_midrun:
        proc.send_signal(signal.SIGKILL)
    proc.wait()

    r = _cli(base_args + ["--workdir", "C", "--resume"], d)
    assert r.returncode == 0, r.stderr
    resume_ok = (_read(d / "C/metrics.jsonl") == _read(d / "A/metrics.jsonl")
                 and _read(d / "C" / final) == _read(d / "A" / final))

    ok = rerun_ok and resume_ok and killed_midrun
    _criterion(11, ok, f"identical manifests byte-identical: {rerun_ok}; killed "
                       f"mid-run then resumed to byte-identical metrics and "
                       f"final weights: {resume_ok} (kill landed mid-run: "
                       f"{killed_midrun})")
