"""Incremental collapsed Gibbs sampling for the franchise state.

Word-level moves resample the table of one word (opening a new table, and
possibly a new topic, with the top level integrated out). Table-level moves
resample the topic of a whole table. A sweep does every word in corpus
order, then every active table in (document, table) order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .crf_state import CrfState, HyperParams


@dataclass
class SweepReport:
    words_resampled: int = 0
    tables_resampled: int = 0
    new_topics_created: int = 0
    topics_removed: int = 0


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def table_probs(state: CrfState, j: int, i: int) -> tuple:
    """Conditional over tables for the currently unseated word ``(j, i)``.

    Returns ``(tables, probs)`` where ``tables`` lists the active table
    indices of document ``j`` followed by ``None`` for a new table.
    """
    w = state._word(j, i)
    assert state.table_of_word[w] < 0, "word must be unseated first"
    hp = state.hp
    f = np.empty(state.topic_capacity)
    wt = np.empty(state.doc_length(j) + 1)
    p_new = K.word_predictive(state.arrays(), int(state.tokens[w]), hp.gamma, hp.eta, f)
    hw = K.table_weights(state.arrays(), w, hp.alpha0, p_new, f, wt)
    active = state.tables_of_doc(j)
    weights = np.array([wt[t] for t in active] + [wt[hw]])
    return active + [None], weights / weights.sum()


def new_table_topic_probs(state: CrfState, v: int) -> tuple:
    """Topic conditional for a new table holding one word of term ``v``.

    Returns ``(labels, probs)``; the last label is ``None`` (new topic).
    """
    hp = state.hp
    f = np.empty(state.topic_capacity)
    wk = np.empty(state.topic_capacity + 1)
    K.word_predictive(state.arrays(), int(v), hp.gamma, hp.eta, f)
    n = K.new_table_topic_weights(state.arrays(), int(v), hp.gamma, f, wk)
    slots = state.active_slots()
    weights = np.append(wk[slots], wk[n])
    labels = state.topic_label[slots].tolist() + [None]
    return labels, weights / weights.sum()


def sample_table(state: CrfState, j: int, i: int, rng) -> int:
    """Unseat word ``(j, i)`` and reseat it by its full conditional.

    Returns the table index it ends up at.
    """
    rng = _rng(rng)
    hp = state.hp
    w = state._word(j, i)
    state.reserve(1)
    st = state.arrays()
    K.unseat(st, w)
    n = state.doc_length(j)
    K.sample_seat(st, w, rng.random(), rng.random(), hp.alpha0, hp.gamma, hp.eta,
                  np.empty(state.topic_capacity), np.empty(n + 1),
                  np.empty(state.topic_capacity + 1))
    return int(state.table_of_word[w])


def sample_topic_for_new_table(state: CrfState, j: int, i: int, rng) -> tuple:
    """Open a new table for the unseated word ``(j, i)``, drawing its topic
    from the top-level conditional. Returns ``(table, topic_label)``."""
    rng = _rng(rng)
    w = state._word(j, i)
    assert state.table_of_word[w] < 0, "word must be unseated first"
    labels, probs = new_table_topic_probs(state, state.tokens[w])
    choice = labels[K.pick(probs, len(probs), rng.random())]
    t = int(K.free_table_index(state.arrays(), j))
    state.seat_word(j, i, t, -1 if choice is None else choice)
    return t, state.table_topic_label(j, t)


def sample_topic_for_table(state: CrfState, j: int, t: int, rng) -> int:
    """Resample the topic of active table ``(j, t)``; returns its label."""
    rng = _rng(rng)
    hp = state.hp
    g = state._table_slot(j, t)
    assert state.table_topic[g] >= 0, f"table ({j}, {t}) is not active"
    state.reserve(1)
    K.sample_table_topic(state.arrays(), g, rng.random(), hp.gamma, hp.eta,
                         np.empty(state.doc_length(j), dtype=np.int64),
                         np.empty(state.topic_capacity + 1),
                         np.zeros(hp.V, dtype=np.int64))
    return state.table_topic_label(j, t)


def gibbs_sweep(state: CrfState, rng) -> SweepReport:
    rng = _rng(rng)
    hp = state.hp
    N = state.n_tokens
    created, removed = state.ctr[K.CREATED], state.ctr[K.REMOVED]
    u_words = rng.random(2 * N)
    state.run_kernel(K.sweep_words, N, u_words, hp.alpha0, hp.gamma, hp.eta)
    n_tables = state.m_total
    u_tables = rng.random(N)
    state.run_kernel(K.sweep_tables, N, u_tables, hp.gamma, hp.eta)
    return SweepReport(
        words_resampled=N,
        tables_resampled=n_tables,
        new_topics_created=int(state.ctr[K.CREATED] - created),
        topics_removed=int(state.ctr[K.REMOVED] - removed),
    )


def init_sequential(corpus, hp: HyperParams, rng, shuffle: bool = False) -> CrfState:
    """Build a starting state by adding words one at a time, each seated by
    the predictive distribution given the words added so far.

    Words are added in corpus order unless ``shuffle`` is set.
    """
    rng = _rng(rng)
    state = CrfState(corpus, hp)
    N = state.n_tokens
    order = rng.permutation(N) if shuffle else np.arange(N, dtype=np.int64)
    u = rng.random(2 * N)
    state.run_kernel(lambda st, pos, *a: K.init_sequential(st, order, pos, *a),
                     N, u, hp.alpha0, hp.gamma, hp.eta)
    return state
