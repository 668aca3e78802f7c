"""Command line driver: ``hdp fit | eval | synth | validate``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics, synth
from .corpus import (Corpus, Vocabulary, load_corpus, load_vocab, split_train_test,
                     write_corpus, write_vocab)
from .crf_state import CrfState
from .estimator import HDPTopicModel, InvariantViolation

TOP_TERMS = 20


class CliError(Exception):
    """A user-facing failure; reported on stderr with exit status 2."""


def _vocab_arg(args) -> Vocabulary | int:
    if args.vocab:
        return load_vocab(args.vocab)
    if args.num_terms:
        return args.num_terms
    raise CliError("one of --vocab or --num-terms is required")


def _fmt_eta(eta: float) -> str:
    return f"{eta:g}"


# -- fit -----------------------------------------------------------------------

def _write_topics(state: CrfState, vocab: Vocabulary, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label, ids in diagnostics.top_terms(state, TOP_TERMS).items():
            words = state.topic_words[state._topic_slot(label)]
            fh.write(f"topic {label} ({words} words): "
                     + " ".join(vocab.terms[v] for v in ids) + "\n")


def _write_similarity(state: CrfState, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "k2", "similarity"])
        for a, b, s in diagnostics.topic_cosine_similarities(state):
            writer.writerow([a, b, repr(s)])


def run_chain(corpus: Corpus, params: dict, seed: int, outdir: str, save_every: int) -> str:
    """Fit one chain and write its files under ``outdir``; returns
    ``outdir``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    ratios_fh = open(out / "ratios.csv", "w", newline="", encoding="utf-8")
    ratios = csv.writer(ratios_fh)
    ratios.writerow(["iter", "ratios"])
    meta = {"seed": seed, **{k: params[k] for k in ("eta", "split_merge", "sm_iters")}}

    def snapshot(model, it):
        model.state_.save(out / f"state-{it}.json", iter=it, **meta)
        _write_topics(model.state_, corpus.vocab, out / f"topics-{it}.txt")

    def on_iter(model, row):
        ratios.writerow([row.iter] + [repr(float(r)) for r in
                                      diagnostics.trace_ratios(model.state_)])
        if save_every and row.iter % save_every == 0:
            snapshot(model, row.iter)

    model = HDPTopicModel(random_state=seed, callback=on_iter, **params)
    try:
        model.fit(corpus)
    finally:
        ratios_fh.close()
        if hasattr(model, "trace_"):
            diagnostics.write_trace(model.trace_, out / "trace.csv")
    last = model.max_iter
    if not save_every or last % save_every:
        snapshot(model, last)
    _write_similarity(model.state_, out / "similarity.csv")
    return str(out)


def _write_mode_diff(dir_sm: Path, dir_gibbs: Path, path: Path, time: str) -> None:
    curve = diagnostics.mode_diff_series(diagnostics.read_trace(dir_sm / "trace.csv"),
                                         diagnostics.read_trace(dir_gibbs / "trace.csv"),
                                         time=time)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y", "best_gibbs_sm", "best_gibbs"])
        for row in zip(curve.t, curve.y, curve.best_a, curve.best_b):
            writer.writerow([repr(float(x)) for x in row])


def _fit_params(args, eta: float, sm: bool) -> dict:
    return dict(
        eta=eta,
        alpha0=args.alpha,
        gamma=args.gamma,
        alpha_prior=(args.alpha_shape, args.alpha_scale),
        gamma_prior=(args.gamma_shape, args.gamma_scale),
        resample_hypers=not args.fix_hypers,
        max_iter=args.max_iters,
        split_merge=sm,
        sm_iters=args.sm_iters,
        sm_per_iter=args.sm_per_iter,
        shuffle_init=args.shuffle_init,
        check_invariants=args.check_invariants,
        n_heldout_sweeps=args.heldout_sweeps,
    )


def run_fit(args) -> int:
    if args.num_chains < 1:
        raise CliError("--num-chains must be at least 1")
    if args.sm_iters > args.max_iters:
        raise CliError("--sm-iters cannot exceed --max-iters")
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(args.corpus, _vocab_arg(args))
    test = None
    if args.train_fraction is not None:
        corpus, test = split_train_test(corpus, args.train_fraction,
                                        np.random.default_rng(args.seed))
        write_corpus(corpus, out / "train.dat")
        write_corpus(test, out / "test.dat")
        write_vocab(corpus.vocab, out / "vocab.txt")
    variants = {"on": [("", True)], "off": [("", False)],
                "both": [("gibbs", False), ("gibbs-sm", True)]}[args.sm]
    jobs = []
    for eta in args.eta:
        base = out / f"eta-{_fmt_eta(eta)}" if len(args.eta) > 1 else out
        for sub, sm in variants:
            for n in range(args.num_chains):
                jobs.append((corpus, _fit_params(args, eta, sm), args.seed + n,
                             str(base / sub / f"chain-{n}"), args.save_every))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            done = list(pool.map(run_chain, *zip(*jobs)))
    else:
        done = [run_chain(*job) for job in jobs]
    for eta in args.eta:
        base = out / f"eta-{_fmt_eta(eta)}" if len(args.eta) > 1 else out
        if args.sm == "both":
            for n in range(args.num_chains):
                _write_mode_diff(base / "gibbs-sm" / f"chain-{n}", base / "gibbs" / f"chain-{n}",
                                 base / f"mode-diff-chain-{n}.csv", args.time_alignment)
    if test is not None:
        for d in done:
            d = Path(d)
            state = CrfState.load(_final_state(d))
            value = diagnostics.heldout_per_word_ll([state], test, rng=args.seed,
                                                    n_sweeps=args.heldout_sweeps)
            (d / "heldout.txt").write_text(f"{value!r}\n", encoding="utf-8")
    print(f"wrote {len(done)} chain(s) under {out}")
    return 0


def _state_iter(path: Path) -> int:
    try:
        return int(path.stem.split("-", 1)[1])
    except (IndexError, ValueError):
        return -1


def _final_state(chain_dir: Path) -> Path:
    return max(chain_dir.glob("state-*.json"), key=_state_iter)


# -- eval ----------------------------------------------------------------------

def _collect_states(paths, min_iter: int) -> list:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(p.rglob("state-*.json"))
        elif p.is_file():
            files.append(p)
        else:
            raise CliError(f"no such state file or directory: {p}")
    files = [f for f in files if _state_iter(f) >= min_iter or _state_iter(f) < 0]
    if not files:
        raise CliError("no saved states found")
    return files


def run_eval(args) -> int:
    files = _collect_states(args.states, args.min_iter)
    states = [CrfState.load(f) for f in files]
    V = states[0].n_terms
    if any(s.n_terms != V for s in states):
        raise CliError("saved states disagree on vocabulary size")
    test = load_corpus(args.test, V)
    value = diagnostics.heldout_per_word_ll(states, test, rng=args.seed,
                                            n_sweeps=args.sweeps)
    if args.output_dir:
        out = Path(args.output_dir)
    else:
        first = Path(args.states[0])
        out = first if first.is_dir() else first.parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "heldout.txt").write_text(f"{value!r}\n", encoding="utf-8")
    print(repr(value))
    return 0


# -- synth ---------------------------------------------------------------------

def run_synth(args) -> int:
    config = synth.SynthConfig(num_docs=args.num_docs, words_per_doc=args.words_per_doc,
                               max_topics_per_doc=args.max_topics_per_doc,
                               topics_per_doc=args.topics_per_doc)
    try:
        config.validate()
    except ValueError as exc:
        raise CliError(f"invalid synthetic config: {exc}") from None
    corpus, truth = synth.generate(config, args.seed)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, out / "corpus.dat")
    write_vocab(corpus.vocab, out / "vocab.txt")
    # the corpus file stores counts by term id, so positions are re-read in
    # sorted term order; keep truth.csv aligned with that order
    order = [np.argsort(d.tokens, kind="stable") for d in corpus.documents]
    synth.write_truth([z[o] for z, o in zip(truth, order)], out / "truth.csv")
    print(f"wrote {corpus.n_docs} documents ({corpus.n_tokens} words) to {out}")
    return 0


# -- validate ------------------------------------------------------------------

def run_validate(args) -> int:
    try:
        state = CrfState.load(args.state)
    except FileNotFoundError:
        raise CliError(f"no such file: {args.state}") from None
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise CliError(f"cannot parse state dump {args.state}: {exc}") from None
    problems = state.validate()
    if problems:
        for p in problems:
            print(p)
        return 1
    print("ok")
    return 0


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit one or more chains")
    fit.add_argument("--corpus", required=True, help="LDA-C corpus file")
    fit.add_argument("--vocab", help="vocabulary file, one term per line")
    fit.add_argument("--num-terms", type=int, help="vocabulary size when no vocab file")
    fit.add_argument("--eta", type=float, nargs="+", default=[0.5],
                     help="topic Dirichlet parameter; several values run a sweep")
    fit.add_argument("--alpha", type=float, default=1.0, help="initial alpha0")
    fit.add_argument("--gamma", type=float, default=1.0, help="initial gamma")
    fit.add_argument("--fix-hypers", action="store_true", help="do not resample alpha0, gamma")
    fit.add_argument("--alpha-shape", type=float, default=1.0)
    fit.add_argument("--alpha-scale", type=float, default=1.0)
    fit.add_argument("--gamma-shape", type=float, default=1.0)
    fit.add_argument("--gamma-scale", type=float, default=1.0)
    fit.add_argument("--max-iters", type=int, default=500)
    fit.add_argument("--sm", choices=("on", "off", "both"), default="on",
                     help="split-merge on, off, or paired runs of both")
    fit.add_argument("--sm-iters", type=int, default=50,
                     help="run split-merge during the first N iterations")
    fit.add_argument("--sm-per-iter", type=int, default=1)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--num-chains", type=int, default=1)
    fit.add_argument("--jobs", type=int, default=1, help="chains run in parallel")
    fit.add_argument("--output-dir", required=True)
    fit.add_argument("--save-every", type=int, default=0,
                     help="save state and topics every N iterations (final always saved)")
    fit.add_argument("--time-alignment", choices=("wallclock", "iteration"),
                     default="wallclock")
    fit.add_argument("--train-fraction", type=float,
                     help="split documents; fit on the training part and score the rest")
    fit.add_argument("--heldout-sweeps", type=int, default=20)
    fit.add_argument("--check-invariants", action="store_true")
    fit.add_argument("--shuffle-init", action="store_true")
    fit.set_defaults(func=run_fit)

    ev = sub.add_parser("eval", help="held-out per-word log likelihood")
    ev.add_argument("--states", nargs="+", required=True,
                    help="state files or directories searched for state-*.json")
    ev.add_argument("--test", required=True, help="LDA-C test corpus")
    ev.add_argument("--min-iter", type=int, default=0,
                    help="ignore states saved before this iteration")
    ev.add_argument("--sweeps", type=int, default=20)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--output-dir", help="where to write heldout.txt")
    ev.set_defaults(func=run_eval)

    sy = sub.add_parser("synth", help="generate the synthetic corpus")
    sy.add_argument("--output-dir", required=True)
    sy.add_argument("--seed", type=int, default=synth.DEFAULT_CORPUS_SEED)
    sy.add_argument("--num-docs", type=int, default=100)
    sy.add_argument("--words-per-doc", type=int, default=50)
    sy.add_argument("--max-topics-per-doc", type=int, default=2)
    sy.add_argument("--topics-per-doc", choices=("uniform", "max"), default="uniform")
    sy.set_defaults(func=run_synth)

    va = sub.add_parser("validate", help="audit a saved state")
    va.add_argument("state")
    va.set_defaults(func=run_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        for p in exc.problems:
            print(f"  {p}", file=sys.stderr)
        return 3
    except (CliError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
