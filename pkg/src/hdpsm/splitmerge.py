"""Split-merge Metropolis-Hastings moves on the corpus-level partition of
tables into topics.

Two tables are drawn uniformly. If they share a topic, a split is proposed
by sequential allocation restricted Gibbs: the two tables seed two new
topics and the remaining tables of the old topic are allocated one at a
time, in random order, in proportion to topic size times predictive
likelihood. If they have different topics, the merge of both topics is
proposed; its reverse-move probability replays the same allocation,
forced to reproduce the current split.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import _kernels as K
from .crf_state import CrfState
from .marginals import log_f_full


@dataclass(frozen=True)
class AnchorPair:
    first: tuple
    second: tuple

    def __post_init__(self):
        if tuple(self.first) == tuple(self.second):
            raise ValueError("anchor tables must be distinct")


@dataclass
class Proposal:
    kind: str
    anchors: AnchorPair
    launch_sets: tuple
    log_q_forward: float
    log_q_reverse: float
    log_prior_ratio: float
    log_likelihood_ratio: float
    visit_order: list = field(default_factory=list)

    @property
    def log_ratio(self) -> float:
        """Unclamped log Metropolis-Hastings ratio."""
        return (self.log_prior_ratio + self.log_likelihood_ratio
                + self.log_q_reverse - self.log_q_forward)

    @property
    def log_accept(self) -> float:
        return min(0.0, self.log_ratio)


@dataclass
class SmOutcome:
    proposed_kind: str | None
    accepted: bool
    log_accept: float
    topics_before: int
    topics_after: int

    @property
    def skipped(self) -> bool:
        return self.proposed_kind is None


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def select_two_tables(state: CrfState, rng) -> AnchorPair | None:
    """Uniform unordered pair of distinct active tables (None if fewer than 2)."""
    rng = _rng(rng)
    m = state.m_total
    if m < 2:
        return None
    slots = np.flatnonzero(state.table_topic >= 0)
    a, b = rng.choice(m, size=2, replace=False)
    return AnchorPair(_pair(state, slots[a]), _pair(state, slots[b]))


def _pair(state, g):
    j = int(state.doc_of_word[g])
    return (j, int(g - state.doc_start[j]))


def _slot(state, table):
    j, t = table
    g = state._table_slot(j, t)
    if state.table_topic[g] < 0:
        raise ValueError(f"table {table} is not active")
    return g


def _gather(state, slots):
    """Concatenate the tokens of the given table slots, in the given order."""
    slots = np.asarray(slots, dtype=np.int64)
    rank = np.full(state.n_tokens, -1, dtype=np.int64)
    rank[slots] = np.arange(len(slots))
    word_rank = rank[state.doc_start[state.doc_of_word] + state.table_of_word]
    sel = np.flatnonzero(word_rank >= 0)
    order = np.argsort(word_rank[sel], kind="stable")
    toks = state.tokens[sel[order]]
    off = np.zeros(len(slots) + 1, dtype=np.int64)
    np.cumsum(np.bincount(word_rank[sel], minlength=len(slots)), out=off[1:])
    return toks, off


def restricted_seq_alloc(state: CrfState, S_c, anchors: AnchorPair,
                         forced=None, rng=None) -> tuple:
    """Allocate the tables ``S_c`` (visited in the given order) to the two
    launch topics seeded by ``anchors``.

    With ``forced`` (a 0/1 side per table) nothing is sampled; the
    probabilities of that allocation are accumulated instead. Returns
    ``(sides, log_q)``.
    """
    sides, log_q, *_ = _alloc(state, S_c, anchors, forced, rng)
    return sides, log_q


def _alloc(state, S_c, anchors, forced, rng):
    a1, a2 = _slot(state, anchors.first), _slot(state, anchors.second)
    body = [_slot(state, tb) for tb in S_c]
    toks, off = _gather(state, [a1, a2] + body)
    n = len(body)
    if forced is None:
        u = _rng(rng).random(n)
        forced_arr = np.full(n, -1, dtype=np.int64)
    else:
        forced_arr = np.asarray(forced, dtype=np.int64).reshape(n)
        if np.any((forced_arr != 0) & (forced_arr != 1)):
            raise AssertionError("forced allocation must use sides 0 and 1 only")
        u = np.zeros(n)
    sides, log_q, c1, c2, m1, m2 = K.seq_alloc(
        toks, off, np.arange(2, n + 2, dtype=np.int64), 0, 1, forced_arr, u,
        state.n_terms, state.hp.eta)
    return sides, float(log_q), c1, c2, int(m1), int(m2), body


def _topic_slot_of(state, table):
    return int(state.table_topic[_slot(state, table)])


def _members(state, topic_slots, anchors):
    """Tables on any of ``topic_slots`` other than the anchors, in
    (document, table) order."""
    g = np.flatnonzero(np.isin(state.table_topic, topic_slots))
    skip = {_slot(state, anchors.first), _slot(state, anchors.second)}
    return [_pair(state, x) for x in g if x not in skip]


def _permuted(items, rng):
    return [items[i] for i in rng.permutation(len(items))]


def propose_split(state: CrfState, anchors: AnchorPair, rng, order=None) -> Proposal:
    """Split proposal for two anchors on the same topic. ``order`` fixes the
    visit order of the other tables; by default it is a uniform shuffle."""
    rng = _rng(rng)
    k = _topic_slot_of(state, anchors.first)
    if _topic_slot_of(state, anchors.second) != k:
        raise ValueError("split needs both anchors on the same topic")
    S_c = _permuted(_members(state, [k], anchors), rng) if order is None else list(order)
    sides, log_q, c1, c2, m1, m2, _ = _alloc(state, S_c, anchors, None, rng)
    eta = state.hp.eta
    m = int(state.topic_tables[k])
    log_prior = float(np.log(state.hp.gamma) + gammaln(m1) + gammaln(m2) - gammaln(m))
    log_lik = log_f_full(c1, eta) + log_f_full(c2, eta) - log_f_full(state.topic_term[k], eta)
    s1 = [anchors.first] + [tb for tb, s in zip(S_c, sides) if s == 0]
    s2 = [anchors.second] + [tb for tb, s in zip(S_c, sides) if s == 1]
    return Proposal("split", anchors, (s1, s2), log_q, 0.0, log_prior, log_lik, S_c)


def propose_merge(state: CrfState, anchors: AnchorPair, rng, order=None) -> Proposal:
    """Merge proposal for two anchors on different topics. The reverse
    (split) probability replays the allocation that recreates the current
    state in a uniformly permuted (or the given) visit order."""
    rng = _rng(rng)
    k1 = _topic_slot_of(state, anchors.first)
    k2 = _topic_slot_of(state, anchors.second)
    if k1 == k2:
        raise ValueError("merge needs anchors on different topics")
    S_c = _permuted(_members(state, [k1, k2], anchors), rng) if order is None else list(order)
    target = [0 if _topic_slot_of(state, tb) == k1 else 1 for tb in S_c]
    _, log_q, c1, c2, m1, m2, _ = _alloc(state, S_c, anchors, target, rng)
    eta = state.hp.eta
    row1, row2 = state.topic_term[k1], state.topic_term[k2]
    assert np.array_equal(c1, row1) and np.array_equal(c2, row2)
    log_prior = -float(np.log(state.hp.gamma) + gammaln(m1) + gammaln(m2) - gammaln(m1 + m2))
    log_lik = log_f_full(row1 + row2, eta) - log_f_full(row1, eta) - log_f_full(row2, eta)
    s1 = [anchors.first] + [tb for tb, s in zip(S_c, target) if s == 0]
    s2 = [anchors.second] + [tb for tb, s in zip(S_c, target) if s == 1]
    return Proposal("merge", anchors, (s1, s2), 0.0, log_q, log_prior, log_lik, S_c)


def apply_proposal(state: CrfState, proposal: Proposal) -> None:
    """Commit a proposal; every affected table moves to a fresh topic label."""
    st = state.arrays
    if proposal.kind == "split":
        state.reserve(2)
        targets = [K.alloc_topic(st()), K.alloc_topic(st())]
        for side, tables in enumerate(proposal.launch_sets):
            for tb in tables:
                K.move_table(st(), _slot(state, tb), targets[side])
    elif proposal.kind == "merge":
        state.reserve(1)
        target = K.alloc_topic(st())
        for tables in proposal.launch_sets:
            for tb in tables:
                K.move_table(st(), _slot(state, tb), target)
    else:
        raise ValueError(f"unknown proposal kind {proposal.kind!r}")


def sm_step(state: CrfState, rng) -> SmOutcome:
    """One split-merge trial: select, propose, accept or reject."""
    rng = _rng(rng)
    before = state.n_topics
    anchors = select_two_tables(state, rng)
    if anchors is None:
        return SmOutcome(None, False, -np.inf, before, before)
    same = _topic_slot_of(state, anchors.first) == _topic_slot_of(state, anchors.second)
    proposal = (propose_split if same else propose_merge)(state, anchors, rng)
    accepted = bool(rng.random() < np.exp(proposal.log_accept))
    if accepted:
        apply_proposal(state, proposal)
    return SmOutcome(proposal.kind, accepted, proposal.log_accept, before, state.n_topics)
