"""Command-line interface.

Each subcommand is one pipeline stage; stages communicate through files,
so any point of the pipeline can be rerun or inspected in isolation. Exit
codes: 0 success, 2 usage error, 3 data or config error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .aligntable import from_clone_map, load_table, save_table, selected_sources
from .checkpoint import load_checkpoint, save_checkpoint
from .clone import DEFAULT_MARKER, build_clone_map, clone_map_from_vocab, clone_text
from .codeswitch import build_switch_mapping
from .errors import DataError, NumericalError
from .evalsuite import (clka_probe, clone_token_ids, embedding_alignment_score,
                        leak_ratio, lm_scorer, make_prompts, oracle_scorer,
                        perplexity, random_scorer)
from .knowledge import build_probes, generate_knowledge_set, load_knowledge, save_knowledge
from .manifest import (PreparedRun, build_schedule, init_model,
                       load_manifest, prepare_run)
from .metrics import MetricsWriter, load_metrics
from .model import ModelState
from .prealign import run_prealign, stage1_slice
from .pretrain import run_pretrain
from .schedule import load_schedule, save_schedule
from .seeding import child_seed
from .textgen import generate_corpus, read_corpus, write_corpus
from .tokenizer import load_vocab, save_vocab, train_vocab
from .zsclt import zsclt_make_task, zsclt_train_eval


def _emit(result: dict, out: str | None) -> None:
    line = json.dumps(result, sort_keys=True)
    print(line)
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(line + "\n")


def _load_model(path: str) -> ModelState:
    state, _ = load_checkpoint(path)
    return state


# ==== data preparation commands ====

def cmd_gen_corpus(args) -> int:
    docs = generate_corpus(args.tokens, args.seed, rare_word_rate=args.rare_rate)
    write_corpus(args.out, docs)
    print(f"wrote {len(docs)} documents to {args.out}")
    return 0


def cmd_synth_clone(args) -> int:
    docs = read_corpus(args.input)
    write_corpus(args.out, [clone_text(d, args.marker) for d in docs])
    print(f"wrote {len(docs)} cloned documents to {args.out}")
    return 0


def cmd_build_vocab(args) -> int:
    lines: list[str] = []
    for path in args.corpus:
        lines.extend(read_corpus(path))
    base = train_vocab(lines, args.max_word_vocab, marker=None)
    full, _ = build_clone_map(base, args.marker)
    save_vocab(args.out, full)
    print(f"wrote {len(full)} tokens to {args.out}")
    return 0


def cmd_gen_knowledge(args) -> int:
    levels = tuple(int(x) for x in args.levels.split(","))
    triplets = generate_knowledge_set(args.periods, args.per_level, levels, args.seed)
    save_knowledge(args.out, triplets)
    if args.docs_out:
        from .knowledge import all_statement_docs
        write_corpus(args.docs_out, all_statement_docs(triplets))
    print(f"wrote {len(triplets)} triplets to {args.out}")
    return 0


def cmd_schedule(args) -> int:
    prep = prepare_run(load_manifest(args.manifest))
    sched = build_schedule(prep)
    save_schedule(args.out, sched)
    print(f"wrote {len(sched.docs)} scheduled documents to {args.out}")
    return 0


# ==== training commands ====

def do_prealign(prep: PreparedRun, workdir: str) -> ModelState:
    m = prep.manifest
    os.makedirs(os.path.join(workdir, "checkpoints"), exist_ok=True)
    state = init_model(prep)
    cfg = m.prealign_config()
    slice_docs = (stage1_slice(prep.base_docs, cfg.data_fraction, m.seed)
                  + stage1_slice(prep.clone_docs, cfg.data_fraction, m.seed))
    with MetricsWriter(os.path.join(workdir, "metrics_prealign.jsonl")) as w:
        run_prealign(state, prep.selected, prep.vocab, slice_docs, cfg, m.seed,
                     on_step=lambda rec: w.write(
                         {k: (round(v, 6) if isinstance(v, float) else v)
                          for k, v in rec.items()}))
    save_checkpoint(os.path.join(workdir, "checkpoints", "stage1"), state)
    save_table(os.path.join(workdir, "table_selected.tsv"), prep.selected)
    return state


def cmd_prealign(args) -> int:
    prep = prepare_run(load_manifest(args.manifest))
    do_prealign(prep, args.workdir)
    print(f"stage-1 checkpoint at {os.path.join(args.workdir, 'checkpoints', 'stage1')}")
    return 0


def do_pretrain(prep: PreparedRun, workdir: str, resume: bool = False,
                schedule_path: str | None = None) -> ModelState:
    m = prep.manifest
    sched = load_schedule(schedule_path) if schedule_path else build_schedule(prep)
    if m.init_checkpoint:
        state, _ = load_checkpoint(m.init_checkpoint)
        state.step = 0
    else:
        state = init_model(prep)
    mapping = (build_switch_mapping(prep.selected, m.bidirectional)
               if m.codeswitch_mode != "off" else {})
    pairs = [(e.source, e.translation) for e in prep.selected.entries]

    def eval_fn(s: ModelState, period: int) -> list[dict]:
        score = embedding_alignment_score(s, prep.vocab, pairs, max_pairs=256,
                                          seed=m.seed)
        return [{"align_cosine": round(score, 6)}]

    corpora = {"base": prep.base_docs, "clone": prep.clone_docs}
    return run_pretrain(workdir, state, prep.vocab, sched, corpora, prep.triplets,
                        mapping, m.run_config(), eval_fn=eval_fn, resume=resume)


def cmd_pretrain(args) -> int:
    prep = prepare_run(load_manifest(args.manifest))
    state = do_pretrain(prep, args.workdir, resume=args.resume,
                        schedule_path=args.schedule)
    print(f"finished at step {state.step}")
    return 0


# ==== evaluation commands ====

def cmd_eval_ppl(args) -> int:
    state = _load_model(args.checkpoint)
    vocab = load_vocab(args.vocab, marker=args.marker)
    docs = read_corpus(args.docs)
    word_filter = None
    if args.split != "all":
        if not args.table:
            raise DataError("--split seen/unseen requires --table")
        table = load_table(args.table)
        known = selected_sources(table) | frozenset(e.translation for e in table.entries)
        if args.split == "seen":
            word_filter = lambda w: w in known
        else:
            word_filter = lambda w: w not in known
    res = perplexity(state, vocab, docs, word_filter=word_filter)
    _emit({"split": args.split, **{k: round(v, 6) for k, v in res.items()}}, args.out)
    return 0


def cmd_eval_clka(args) -> int:
    vocab = load_vocab(args.vocab, marker=args.marker)
    triplets = load_knowledge(args.knowledge)
    probes = build_probes(triplets, child_seed(args.seed, "probes"))
    clone = args.language == "clone"
    if args.scorer == "lm":
        if not args.checkpoint:
            raise DataError("--scorer lm requires --checkpoint")
        state = _load_model(args.checkpoint)
        fn = lm_scorer(state, vocab)
    elif args.scorer == "random":
        fn = random_scorer(args.seed)
    else:
        fn = oracle_scorer(probes, marker=args.marker)
    res = clka_probe(probes, fn, clone=clone, marker=args.marker)
    _emit({"language": args.language, "scorer": args.scorer,
           "accuracy": round(res["accuracy"], 6), "n": res["n"]}, args.out)
    return 0


def cmd_eval_zsclt(args) -> int:
    state = _load_model(args.checkpoint)
    vocab = load_vocab(args.vocab, marker=args.marker)
    task = zsclt_make_task(args.n_train, args.n_test, args.seed)
    res = zsclt_train_eval(state, vocab, task, child_seed(args.seed, "zsclt-head"),
                           marker=args.marker)
    _emit({k: round(v, 6) for k, v in res.items()}, args.out)
    return 0


def cmd_probe_align(args) -> int:
    state = _load_model(args.checkpoint)
    vocab = load_vocab(args.vocab, marker=args.marker)
    table = load_table(args.table) if args.table else from_clone_map(
        vocab, clone_map_from_vocab(vocab))
    pairs = [(e.source, e.translation) for e in table.entries]
    score = embedding_alignment_score(state, vocab, pairs,
                                      max_pairs=args.max_pairs, seed=args.seed)
    _emit({"align_cosine": round(score, 6), "n_pairs": min(len(pairs), args.max_pairs)},
          args.out)
    return 0


def cmd_gen_leak(args) -> int:
    state = _load_model(args.checkpoint)
    vocab = load_vocab(args.vocab, marker=args.marker)
    docs = read_corpus(args.docs)
    prompts = make_prompts(vocab, docs, args.prompt_len, args.n,
                           child_seed(args.seed, "leak-prompts"))
    res = leak_ratio(state, vocab, prompts, args.max_new, args.seed,
                     clone_token_ids(vocab), temperature=args.temperature)
    _emit({k: round(v, 8) for k, v in res.items()}, args.out)
    return 0


def cmd_report(args) -> int:
    for wd in args.workdir:
        print(f"== {wd}")
        mp = os.path.join(wd, "metrics.jsonl")
        if os.path.exists(mp):
            recs = load_metrics(mp)
            steps = [r for r in recs if "loss" in r]
            evals = [r for r in recs if r.get("event") == "period_eval"]
            if steps:
                print(f"  steps {len(steps)}, final loss {steps[-1]['loss']:.4f}")
            for r in evals:
                extra = {k: v for k, v in r.items()
                         if k not in ("event", "step", "period")}
                print(f"  period {r['period']}: {extra}")
        pp = os.path.join(wd, "metrics_prealign.jsonl")
        if os.path.exists(pp):
            recs = load_metrics(pp)
            if recs:
                print(f"  stage-1 steps {len(recs)}, final align loss "
                      f"{recs[-1]['loss_align']:.4f}")
        ed = os.path.join(wd, "evals")
        if os.path.isdir(ed):
            for name in sorted(os.listdir(ed)):
                with open(os.path.join(ed, name), encoding="utf-8") as f:
                    print(f"  {name}: {f.read().strip()}")
    return 0


# ==== parser ====

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alignlab")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("gen-corpus", help="generate a synthetic base corpus")
    q.add_argument("--tokens", type=int, required=True)
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--rare-rate", type=float, default=0.003)
    q.set_defaults(fn=cmd_gen_corpus)

    q = sub.add_parser("synth-clone", help="clone a corpus word by word")
    q.add_argument("--input", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--marker", default=DEFAULT_MARKER)
    q.set_defaults(fn=cmd_synth_clone)

    q = sub.add_parser("build-vocab", help="train the vocabulary and extend with clones")
    q.add_argument("--corpus", nargs="+", required=True)
    q.add_argument("--max-word-vocab", type=int, required=True)
    q.add_argument("--marker", default=DEFAULT_MARKER)
    q.add_argument("--out", required=True)
    q.set_defaults(fn=cmd_build_vocab)

    q = sub.add_parser("gen-knowledge", help="generate knowledge triplets")
    q.add_argument("--periods", type=int, required=True)
    q.add_argument("--per-level", type=int, required=True)
    q.add_argument("--levels", default="1,4,16,64")
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--docs-out", default="")
    q.set_defaults(fn=cmd_gen_knowledge)

    q = sub.add_parser("schedule", help="materialize the training schedule")
    q.add_argument("--manifest", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(fn=cmd_schedule)

    q = sub.add_parser("prealign", help="run the alignment stage")
    q.add_argument("--manifest", required=True)
    q.add_argument("--workdir", required=True)
    q.set_defaults(fn=cmd_prealign)

    q = sub.add_parser("pretrain", help="run main pretraining")
    q.add_argument("--manifest", required=True)
    q.add_argument("--workdir", required=True)
    q.add_argument("--resume", action="store_true")
    q.add_argument("--schedule", default="")
    q.set_defaults(fn=cmd_pretrain)

    q = sub.add_parser("eval-ppl", help="corpus perplexity")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--vocab", required=True)
    q.add_argument("--marker", default=DEFAULT_MARKER)
    q.add_argument("--docs", required=True)
    q.add_argument("--split", choices=("all", "seen", "unseen"), default="all")
    q.add_argument("--table", default="")
    q.add_argument("--out", default="")
    q.set_defaults(fn=cmd_eval_ppl)

    q = sub.add_parser("eval-clka", help="knowledge probe accuracy")
    q.add_argument("--checkpoint", default="")
    q.add_argument("--vocab", required=True)
    q.add_argument("--marker", default=DEFAULT_MARKER)
    q.add_argument("--knowledge", required=True)
    q.add_argument("--language", choices=("base", "clone"), default="clone")
    q.add_argument("--scorer", choices=("lm", "random", "oracle"), default="lm")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", default="")
    q.set_defaults(fn=cmd_eval_clka)

    q = sub.add_parser("eval-zsclt", help="zero-shot transfer accuracy")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--vocab", required=True)
    q.add_argument("--marker", default=DEFAULT_MARKER)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--n-train", type=int, default=512)
    q.add_argument("--n-test", type=int, default=256)
    q.add_argument("--out", default="")
    q.set_defaults(fn=cmd_eval_zsclt)

    q = sub.add_parser("probe-align", help="embedding alignment cosine")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--vocab", required=True)
    q.add_argument("--marker", default=DEFAULT_MARKER)
    q.add_argument("--table", default="")
    q.add_argument("--max-pairs", type=int, default=512)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", default="")
    q.set_defaults(fn=cmd_probe_align)

    q = sub.add_parser("gen-leak", help="language-leak ratio of sampled continuations")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--vocab", required=True)
    q.add_argument("--marker", default=DEFAULT_MARKER)
    q.add_argument("--docs", required=True)
    q.add_argument("--n", type=int, default=5000)
    q.add_argument("--prompt-len", type=int, default=8)
    q.add_argument("--max-new", type=int, default=16)
    q.add_argument("--temperature", type=float, default=1.0)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", default="")
    q.set_defaults(fn=cmd_gen_leak)

    q = sub.add_parser("report", help="summarize run directories")
    q.add_argument("--workdir", nargs="+", required=True)
    q.set_defaults(fn=cmd_report)

    return p


def cli_dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return int(args.fn(args) or 0)
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 4
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
