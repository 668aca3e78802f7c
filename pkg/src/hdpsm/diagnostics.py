"""Measurements on franchise states and sampler traces."""

from __future__ import annotations

import csv
import itertools
import zlib
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.special import gammaln, logsumexp

from . import _kernels as K
from .crf_state import CrfState, HyperParams
from .marginals import log_f_full


@dataclass
class TraceRow:
    iter: int
    elapsed_ms: float
    K: int
    m_total: int
    per_word_joint_lp: float
    per_word_cond_ll: float
    alpha0: float
    gamma: float
    sm_split_proposed: int = 0
    sm_split_accepted: int = 0
    sm_merge_proposed: int = 0
    sm_merge_accepted: int = 0


TRACE_FIELDS = [f.name for f in fields(TraceRow)]


def write_trace(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for row in rows:
            d = asdict(row)
            writer.writerow([repr(d[k]) if isinstance(d[k], float) else d[k]
                             for k in TRACE_FIELDS])


def read_trace(path) -> list:
    types = {f.name: f.type for f in fields(TraceRow)}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(TraceRow(**{k: (int(v) if types[k] == "int" else float(v))
                                    for k, v in rec.items()}))
    return rows


def per_word_joint_lp(state: CrfState) -> float:
    """(log p(t, k) + log p(x | t, k)) / N."""
    return (state.log_partition_prior() + state.log_likelihood()) / state.n_tokens


def per_word_cond_ll(state: CrfState) -> float:
    return state.log_likelihood() / state.n_tokens


@dataclass
class ModeCurve:
    """Difference of running-best per-word log probability between two
    chains, on a shared time grid."""

    t: np.ndarray
    y: np.ndarray
    best_a: np.ndarray
    best_b: np.ndarray


def _running_best(times, values, grid):
    best = np.maximum.accumulate(np.asarray(values, dtype=float))
    idx = np.searchsorted(np.asarray(times, dtype=float), grid, side="right") - 1
    return best[idx]


def mode_diff_series(trace_a, trace_b, time: str = "wallclock") -> ModeCurve:
    """``y_t = M_t(a) - M_t(b)`` where ``M_t`` is the best per-word joint
    log probability a chain has reached by time ``t``.

    ``time`` selects the clock: ``"wallclock"`` (elapsed_ms) or
    ``"iteration"``. The grid is the union of both chains' stamps, starting
    once both chains have at least one row.
    """
    if not trace_a or not trace_b:
        raise ValueError("both traces must be nonempty")
    key = {"wallclock": "elapsed_ms", "iteration": "iter"}[time]
    ta = np.array([getattr(r, key) for r in trace_a], dtype=float)
    tb = np.array([getattr(r, key) for r in trace_b], dtype=float)
    va = [r.per_word_joint_lp for r in trace_a]
    vb = [r.per_word_joint_lp for r in trace_b]
    grid = np.union1d(ta, tb)
    grid = grid[grid >= max(ta[0], tb[0])]
    best_a = _running_best(ta, va, grid)
    best_b = _running_best(tb, vb, grid)
    return ModeCurve(grid, best_a - best_b, best_a, best_b)


def trace_ratios(state: CrfState) -> np.ndarray:
    """Cumulative share of words on the most popular topic, the two most
    popular, ..., all topics."""
    sizes = np.sort(state.topic_words[state.active_slots()])[::-1]
    out = np.cumsum(sizes) / state.n_tokens
    if len(out):
        out[-1] = 1.0
    return out


def topic_cosine_similarities(state: CrfState, smoothing: float | None = None) -> list:
    """Cosine similarity of every unordered pair of active topics, on term
    counts smoothed by ``smoothing`` (default: eta). Labels ascend."""
    if smoothing is None:
        smoothing = state.hp.eta
    slots = state.active_slots()
    slots = slots[np.argsort(state.topic_label[slots])]
    vecs = state.topic_term[slots] + float(smoothing)
    norms = np.linalg.norm(vecs, axis=1)
    sims = (vecs @ vecs.T) / np.outer(norms, norms)
    labels = state.topic_label[slots]
    return [(int(labels[a]), int(labels[b]), float(min(max(sims[a, b], 0.0), 1.0)))
            for a, b in itertools.combinations(range(len(slots)), 2)]


def top_terms(state: CrfState, n: int = 20) -> dict:
    """Top ``n`` term ids per topic label by smoothed count."""
    out = {}
    for s in state.active_slots():
        row = state.topic_term[s] + state.hp.eta
        out[int(state.topic_label[s])] = np.argsort(-row, kind="stable")[:n].tolist()
    return dict(sorted(out.items()))


def frozen_topics(state: CrfState, hp: HyperParams | None = None):
    """Predictive term distributions and top-level weights of a state."""
    hp = hp or state.hp
    slots = state.active_slots()
    slots = slots[np.argsort(state.topic_label[slots])]
    rows = state.topic_term[slots].astype(float)
    phi = (rows + hp.eta) / (rows.sum(axis=1, keepdims=True) + hp.V * hp.eta)
    m_k = state.topic_tables[slots].astype(float)
    denom = m_k.sum() + hp.gamma
    p0 = (m_k @ phi + hp.gamma / hp.V) / denom
    return phi, p0, m_k, state.topic_label[slots]


def _doc_seed(base: int, tokens) -> np.random.Generator:
    key = zlib.crc32(np.ascontiguousarray(tokens, dtype=np.int64).tobytes())
    return np.random.default_rng([base, key])


def document_predictives(state: CrfState, docs, hp=None, n_sweeps: int = 20,
                         seed: int = 0) -> tuple:
    """Run document-local Gibbs for each of ``docs`` against the frozen
    global topics of ``state``.

    Returns ``(probs, theta)``: per document, averaged leave-one-out word
    predictive probabilities, and the averaged topic shares (columns follow
    ascending topic label; last column is mass on new topics).
    """
    hp = hp or state.hp
    phi, p0, m_k, _ = frozen_topics(state, hp)
    probs, theta = [], np.zeros((len(docs), len(m_k) + 1))
    for d, tokens in enumerate(docs):
        tokens = np.asarray(tokens, dtype=np.int64)
        u = _doc_seed(seed, tokens).random(3 * len(tokens) * (n_sweeps + 1))
        probs.append(K.heldout_doc(tokens, phi, p0, m_k, hp.alpha0, hp.gamma,
                                   n_sweeps, u, theta[d]))
    return probs, theta


def heldout_per_word_ll(states, test, hp: HyperParams | None = None, rng=None,
                        n_sweeps: int = 20) -> float:
    """Per-word held-out log likelihood of ``test`` under an ensemble of
    saved states.

    For every state the global topics and table counts are frozen and each
    test document gets ``n_sweeps`` sweeps of document-local Gibbs. Each
    word's leave-one-out predictive probability is averaged over the second
    half of the sweeps and over states; the result is the mean log of these
    averages over all test words.
    """
    states = list(states)
    if not states:
        raise ValueError("empty state ensemble")
    docs = test.token_lists() if hasattr(test, "token_lists") else [np.asarray(d) for d in test]
    if not docs:
        raise ValueError("empty test corpus")
    if isinstance(rng, (int, np.integer)) or rng is None:
        seed = 0 if rng is None else int(rng)
    else:
        seed = int(rng.integers(2**31))
    total = [np.zeros(len(d)) for d in docs]
    for state in states:
        probs, _ = document_predictives(state, docs, hp, n_sweeps, seed)
        for acc, p in zip(total, probs):
            acc += p
    logs = [np.log(acc / len(states)) for acc in total]
    n = sum(len(x) for x in logs)
    return float(np.sum([x.sum() for x in logs]) / n)


# -- exact enumeration for tiny corpora ----------------------------------------

def _set_partitions(n):
    """Restricted growth strings of length ``n``."""
    if n == 0:
        yield ()
        return

    def rec(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for b in range(top + 2):
            yield from rec(prefix + [b], max(top, b))

    yield from rec([0], 0)


def _rgs(labels):
    seen = {}
    return tuple(seen.setdefault(x, len(seen)) for x in labels)


def canonical_config(state: CrfState) -> tuple:
    """Label-free description of a state: per document, the block of each
    word; then the topic block of each table, tables taken in order of
    (document, first word)."""
    doc_blocks, topics = [], []
    for j in range(state.n_docs):
        base = state.doc_start[j]
        tabs = state.table_of_word[base:state.doc_start[j + 1]]
        blocks = _rgs(tabs.tolist())
        doc_blocks.append(blocks)
        first = {}
        for t in tabs.tolist():
            first.setdefault(t, len(first))
        for t in sorted(first, key=first.get):
            topics.append(int(state.topic_label[state.table_topic[base + t]]))
    return tuple(doc_blocks), _rgs(topics)


MAX_ENUM_WORDS = 6


def exact_posterior_tiny(corpus, hp: HyperParams) -> dict:
    """Exact posterior over canonical configurations by brute force.

    Every table partition of every document and every topic partition of
    the resulting tables is weighted by prior times collapsed likelihood.
    """
    docs = corpus.token_lists() if hasattr(corpus, "token_lists") else [np.asarray(d) for d in corpus]
    N = sum(len(d) for d in docs)
    if N > MAX_ENUM_WORDS:
        raise ValueError(f"enumeration limited to {MAX_ENUM_WORDS} words, got {N}")
    a, g = hp.alpha0, hp.gamma
    logw = {}
    for blocks in itertools.product(*(list(_set_partitions(len(d))) for d in docs)):
        tables = []
        lp_t = 0.0
        for d, bl in zip(docs, blocks):
            sizes = np.bincount(bl)
            lp_t += (len(sizes) * np.log(a) + gammaln(sizes).sum()
                     - (gammaln(len(d) + a) - gammaln(a)))
            tables += [np.asarray(d)[np.asarray(bl) == b] for b in range(len(sizes))]
        m = len(tables)
        for kb in _set_partitions(m):
            m_k = np.bincount(kb)
            lp_k = len(m_k) * np.log(g) + gammaln(m_k).sum() - (gammaln(m + g) - gammaln(g))
            ll = 0.0
            for k in range(len(m_k)):
                words = np.concatenate([tables[i] for i in range(m) if kb[i] == k])
                ll += log_f_full(np.bincount(words, minlength=hp.V), hp.eta)
            logw[(tuple(blocks), kb)] = lp_t + lp_k + ll
    keys = list(logw)
    vals = np.array([logw[k] for k in keys])
    probs = np.exp(vals - logsumexp(vals))
    return dict(zip(keys, probs.tolist()))


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
