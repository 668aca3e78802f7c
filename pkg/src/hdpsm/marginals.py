"""Collapsed Dirichlet-multinomial densities for topics under a symmetric
Dirichlet(eta) prior on the topic-term distributions.

All functions work in natural-log space. ``hp`` is either a bare ``eta`` or
any object carrying an ``eta`` attribute (e.g. ``HyperParams``). Topic and
table statistics are dense per-term count vectors of length ``V``.
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np
from scipy.special import gammaln


class TopicStats:
    """Word counts attached to one topic: ``total`` and per-term ``counts``."""

    __slots__ = ("counts",)

    def __init__(self, counts):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 1:
            raise ValueError("counts must be a 1-d array")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        self.counts = counts

    @classmethod
    def empty(cls, n_terms: int) -> "TopicStats":
        return cls(np.zeros(n_terms, dtype=np.int64))

    @classmethod
    def from_mapping(cls, per_term: Mapping[int, int], n_terms: int):
        counts = np.zeros(n_terms, dtype=np.int64)
        for v, c in per_term.items():
            counts[v] += c
        return cls(counts)

    @classmethod
    def from_tokens(cls, tokens, n_terms: int):
        return cls(np.bincount(np.asarray(tokens, dtype=np.int64),
                               minlength=n_terms))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_terms(self) -> int:
        return self.counts.shape[0]

    def __add__(self, other: "TopicStats") -> "TopicStats":
        return type(self)(self.counts + other.counts)

    def __sub__(self, other: "TopicStats") -> "TopicStats":
        return type(self)(self.counts - other.counts)

    def __eq__(self, other):
        return isinstance(other, TopicStats) and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        nz = {int(v): int(c) for v, c in enumerate(self.counts) if c}
        return f"{type(self).__name__}(total={self.total}, per_term={nz})"


# A table's words have the same shape of statistic as a topic's.
TableWordVector = TopicStats


def _eta(hp) -> float:
    return float(getattr(hp, "eta", hp))


def _as_counts(stats):
    if isinstance(stats, TopicStats):
        return stats.counts
    return np.asarray(stats)


def log_f_full(stats, hp) -> float:
    """Log marginal likelihood of all words in a topic, topic distribution
    integrated out. An empty topic gives 0."""
    eta = _eta(hp)
    c = _as_counts(stats)
    n_terms = c.shape[-1]
    n = c.sum(axis=-1)
    out = (gammaln(n_terms * eta) - gammaln(n + n_terms * eta)
           + (gammaln(c + eta) - gammaln(eta)).sum(axis=-1))
    if np.ndim(out) == 0:
        return float(out)
    return out


def log_f_table_cond(stats, table, hp) -> float:
    """Log predictive density of a table's words given the other words of a
    topic. ``stats`` must already exclude the table's words."""
    eta = _eta(hp)
    c = _as_counts(stats)
    x = _as_counts(table)
    n_terms = c.shape[0]
    n = c.sum()
    nx = x.sum()
    if nx == 0:
        return 0.0
    nz = x > 0
    return float(gammaln(n + n_terms * eta) - gammaln(n + nx + n_terms * eta)
                 + (gammaln(c[nz] + x[nz] + eta) - gammaln(c[nz] + eta)).sum())


def log_f_word_cond(stats, v: int, hp) -> float:
    """Log predictive probability that the next word of the topic is term
    ``v``."""
    eta = _eta(hp)
    c = _as_counts(stats)
    return float(np.log((c[v] + eta) / (c.sum() + c.shape[0] * eta)))


def log_prior_predictive_table(table, hp) -> float:
    """Log density of a table's words under a brand-new topic."""
    x = _as_counts(table)
    return log_f_table_cond(np.zeros_like(x), x, hp)
