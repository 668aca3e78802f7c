"""scikit-learn style front end for the HDP topic model sampler."""

from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import diagnostics, gibbs, hyper, splitmerge
from .corpus import Corpus, Vocabulary
from .crf_state import CrfState, HyperParams


class InvariantViolation(RuntimeError):
    """The sampler state failed its consistency audit."""

    def __init__(self, iteration, problems):
        self.iteration = iteration
        self.problems = list(problems)
        super().__init__(f"state inconsistent after iteration {iteration}: "
                         + "; ".join(self.problems[:5]))


def check_corpus(X, n_terms: int | None = None) -> Corpus:
    """Coerce ``X`` to a ``Corpus``.

    Accepts a ``Corpus``, a sequence of term-id sequences, or a document-term
    count matrix (dense or scipy sparse). ``n_terms`` fixes the vocabulary
    size; otherwise it is taken from the input.
    """
    if isinstance(X, Corpus):
        if n_terms is not None and X.n_terms != n_terms:
            raise ValueError(f"corpus has {X.n_terms} terms, expected {n_terms}")
        return X
    if sp.issparse(X) or (isinstance(X, np.ndarray) and X.ndim == 2):
        M = sp.csr_matrix(X)
        if M.nnz and (M.data.min() < 0 or np.any(M.data != np.round(M.data))):
            raise ValueError("document-term matrix must hold nonnegative integer counts")
        V = M.shape[1] if n_terms is None else n_terms
        if M.shape[1] != V:
            raise ValueError(f"matrix has {M.shape[1]} columns, expected {V}")
        docs = [np.repeat(M.indices[M.indptr[r]:M.indptr[r + 1]],
                          M.data[M.indptr[r]:M.indptr[r + 1]].astype(np.int64))
                for r in range(M.shape[0])]
    else:
        docs = [np.asarray(d) for d in X]
        if not docs:
            raise ValueError("empty corpus")
        for d in docs:
            if d.ndim != 1 or (d.size and not np.issubdtype(d.dtype, np.integer)):
                raise ValueError("documents must be 1-d sequences of integer term ids")
        V = n_terms if n_terms is not None else int(max(d.max() for d in docs if d.size)) + 1
    try:
        return Corpus.from_token_lists(docs, Vocabulary.anonymous(V))
    except ValueError as exc:
        raise ValueError(f"invalid corpus: {exc}") from None


class HDPTopicModel(TransformerMixin, BaseEstimator):
    """HDP topic model fitted by collapsed Gibbs sampling, optionally with
    split-merge moves on the topic partition.

    Each iteration is one Gibbs sweep, then (unless ``resample_hypers`` is
    off) an update of ``alpha0`` and ``gamma``, then ``sm_per_iter``
    split-merge trials while the iteration number is at most ``sm_iters``.

    Parameters
    ----------
    eta : float
        Symmetric Dirichlet parameter of the topics.
    alpha0, gamma : float
        Initial document- and corpus-level concentrations.
    alpha_prior, gamma_prior : (shape, scale)
        Gamma priors used when ``resample_hypers`` is true.
    max_iter : int
        Number of iterations.
    split_merge : bool
        Whether to run split-merge trials at all.
    sm_iters, sm_per_iter : int
        Split-merge schedule.
    shuffle_init : bool
        Add words in random rather than corpus order during initialization.
    check_invariants : bool
        Audit the state after every iteration; raises ``InvariantViolation``.
    n_heldout_sweeps : int
        Document-local sweeps used by ``transform`` and ``score``.
    random_state : int, Generator or None
    callback : callable, optional
        Called as ``callback(model, row)`` after every iteration.

    Attributes
    ----------
    state_ : CrfState
    trace_ : list of TraceRow
    n_topics_ : int
    topic_labels_ : ndarray
    components_ : ndarray of shape (n_topics_, n_terms)
        Word counts per topic, rows ordered by ``topic_labels_``.
    """

    def __init__(self, eta=0.5, alpha0=1.0, gamma=1.0, alpha_prior=(1.0, 1.0),
                 gamma_prior=(1.0, 1.0), resample_hypers=True, max_iter=500,
                 split_merge=True, sm_iters=50, sm_per_iter=1, shuffle_init=False,
                 check_invariants=False, n_heldout_sweeps=20, random_state=None,
                 callback=None):
        self.eta = eta
        self.alpha0 = alpha0
        self.gamma = gamma
        self.alpha_prior = alpha_prior
        self.gamma_prior = gamma_prior
        self.resample_hypers = resample_hypers
        self.max_iter = max_iter
        self.split_merge = split_merge
        self.sm_iters = sm_iters
        self.sm_per_iter = sm_per_iter
        self.shuffle_init = shuffle_init
        self.check_invariants = check_invariants
        self.n_heldout_sweeps = n_heldout_sweeps
        self.random_state = random_state
        self.callback = callback

    def _check_params(self):
        if self.max_iter < 0 or self.sm_iters < 0 or self.sm_per_iter < 0:
            raise ValueError("iteration counts must be nonnegative")
        self._alpha_prior = hyper.GammaPrior(*self.alpha_prior)
        self._gamma_prior = hyper.GammaPrior(*self.gamma_prior)

    def fit(self, X, y=None):
        self._check_params()
        corpus = check_corpus(X)
        start = time.perf_counter()
        self.rng_ = np.random.default_rng(self.random_state)
        hp = HyperParams(self.alpha0, self.gamma, self.eta, corpus.n_terms)
        self.state_ = gibbs.init_sequential(corpus, hp, self.rng_, shuffle=self.shuffle_init)
        self.n_terms_ = corpus.n_terms
        self.vocab_ = corpus.vocab
        self.trace_ = []
        self._audit(0)
        for it in range(1, self.max_iter + 1):
            self._iterate(it, start)
        self._publish()
        return self

    def _iterate(self, it, start):
        state, rng = self.state_, self.rng_
        gibbs.gibbs_sweep(state, rng)
        if self.resample_hypers:
            hyper.resample_alpha0(state, self._alpha_prior, rng)
            hyper.resample_gamma(state, self._gamma_prior, rng)
        counts = {"split": [0, 0], "merge": [0, 0]}
        if self.split_merge and it <= self.sm_iters:
            for _ in range(self.sm_per_iter):
                outcome = splitmerge.sm_step(state, rng)
                if not outcome.skipped:
                    counts[outcome.proposed_kind][0] += 1
                    counts[outcome.proposed_kind][1] += int(outcome.accepted)
        row = diagnostics.TraceRow(
            iter=it,
            elapsed_ms=round((time.perf_counter() - start) * 1000.0, 3),
            K=state.n_topics,
            m_total=state.m_total,
            per_word_joint_lp=diagnostics.per_word_joint_lp(state),
            per_word_cond_ll=diagnostics.per_word_cond_ll(state),
            alpha0=state.hp.alpha0,
            gamma=state.hp.gamma,
            sm_split_proposed=counts["split"][0],
            sm_split_accepted=counts["split"][1],
            sm_merge_proposed=counts["merge"][0],
            sm_merge_accepted=counts["merge"][1],
        )
        self.trace_.append(row)
        self._audit(it)
        if self.callback is not None:
            self.callback(self, row)

    def _audit(self, it):
        if self.check_invariants:
            problems = self.state_.validate()
            if problems:
                raise InvariantViolation(it, problems)

    def _publish(self):
        state = self.state_
        slots = state.active_slots()
        slots = slots[np.argsort(state.topic_label[slots])]
        self.topic_labels_ = state.topic_label[slots].copy()
        self.n_topics_ = len(slots)
        self.components_ = state.topic_term[slots].copy()
        self.alpha0_ = state.hp.alpha0
        self.gamma_ = state.hp.gamma

    @property
    def topic_word_(self) -> np.ndarray:
        """Posterior-predictive term distribution of each fitted topic."""
        check_is_fitted(self, "components_")
        c = self.components_ + self.eta
        return c / c.sum(axis=1, keepdims=True)

    def transform(self, X) -> np.ndarray:
        """Topic shares of each document against the frozen fitted topics.

        Rows sum to at most 1; the remainder is the share of words seated on
        topics not present in the fitted model.
        """
        check_is_fitted(self, "state_")
        corpus = check_corpus(X, self.n_terms_)
        _, theta = diagnostics.document_predictives(
            self.state_, corpus.token_lists(), n_sweeps=self.n_heldout_sweeps,
            seed=self._eval_seed())
        return theta[:, :-1]

    def score(self, X, y=None) -> float:
        """Per-word held-out log likelihood of ``X``."""
        check_is_fitted(self, "state_")
        corpus = check_corpus(X, self.n_terms_)
        return diagnostics.heldout_per_word_ll(
            [self.state_], corpus, rng=self._eval_seed(), n_sweeps=self.n_heldout_sweeps)

    def _eval_seed(self) -> int:
        rs = self.random_state
        return int(rs) if isinstance(rs, (int, np.integer)) else 0

    def sm_acceptance_rate(self) -> float:
        check_is_fitted(self, "trace_")
        proposed = sum(r.sm_split_proposed + r.sm_merge_proposed for r in self.trace_)
        accepted = sum(r.sm_split_accepted + r.sm_merge_accepted for r in self.trace_)
        return accepted / proposed if proposed else float("nan")
