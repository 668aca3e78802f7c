"""Auxiliary-variable resampling of the concentration parameters under
Gamma priors.

The top-level concentration uses the Escobar-West scheme for a single DP
with ``K`` clusters among ``m`` observations. The document-level
concentration is shared by all documents and uses one Beta and one
Bernoulli auxiliary variable per document (Teh et al., 2006, appendix).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape, scale) prior; mean is ``shape * scale``."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("Gamma prior needs positive shape and scale")

    @property
    def rate(self) -> float:
        return 1.0 / self.scale


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def sample_concentration(conc: float, n_clusters: int, n_obs: int,
                         prior: GammaPrior, rng, n_iter: int = 20) -> float:
    """Escobar-West update of a DP concentration given ``n_clusters`` among
    ``n_obs`` observations."""
    rng = _rng(rng)
    if n_obs < 1 or n_clusters < 1:
        raise ValueError("need at least one observation and one cluster")
    for _ in range(n_iter):
        x = rng.beta(conc + 1.0, n_obs)
        rate = prior.rate - np.log(x)
        odds = (prior.shape + n_clusters - 1.0) / (n_obs * rate)
        shape = prior.shape + n_clusters - (0.0 if rng.random() < odds / (1.0 + odds) else 1.0)
        conc = rng.gamma(shape, 1.0 / rate)
    return float(max(conc, np.finfo(float).tiny))


def sample_concentration_grouped(conc: float, n_tables, n_words, prior: GammaPrior,
                                 rng, n_iter: int = 20) -> float:
    """Update a concentration shared by several DPs; group ``j`` has
    ``n_tables[j]`` clusters among ``n_words[j]`` observations."""
    rng = _rng(rng)
    n_words = np.asarray(n_words, dtype=float)
    total_tables = float(np.sum(n_tables))
    if np.any(n_words < 1):
        raise ValueError("every group needs at least one observation")
    for _ in range(n_iter):
        w = rng.beta(conc + 1.0, n_words)
        s = rng.random(len(n_words)) < n_words / (n_words + conc)
        shape = prior.shape + total_tables - s.sum()
        rate = prior.rate - np.log(w).sum()
        conc = rng.gamma(shape, 1.0 / rate)
    return float(max(conc, np.finfo(float).tiny))


def resample_gamma(state, prior: GammaPrior, rng, n_iter: int = 20) -> float:
    state.hp.gamma = sample_concentration(
        state.hp.gamma, state.n_topics, state.m_total, prior, rng, n_iter)
    return state.hp.gamma


def resample_alpha0(state, prior: GammaPrior, rng, n_iter: int = 20) -> float:
    state.hp.alpha0 = sample_concentration_grouped(
        state.hp.alpha0, state.doc_tables, np.diff(state.doc_start), prior, rng, n_iter)
    return state.hp.alpha0
