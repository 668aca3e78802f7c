import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from hdpsm import diagnostics as dg
from hdpsm import gibbs, synth
from hdpsm.corpus import Corpus
from hdpsm.crf_state import HyperParams
from hdpsm.diagnostics import TraceRow
from hdpsm.marginals import log_f_full

from conftest import build_state, random_state

HP = HyperParams(alpha0=1.0, gamma=1.0, eta=0.5, V=3)


def row(it, lp, ms=None):
    return TraceRow(iter=it, elapsed_ms=float(it if ms is None else ms), K=1, m_total=1,
                    per_word_joint_lp=lp, per_word_cond_ll=lp, alpha0=1.0, gamma=1.0)


def scratch_joint(state):
    """Joint log probability recomputed from the seating alone."""
    hp = state.hp
    lp = 0.0
    table_topic, table_words = [], []
    for j in range(state.n_docs):
        tabs = [state.table_of(j, i) for i in range(state.doc_length(j))]
        sizes = np.bincount(tabs)
        sizes = sizes[sizes > 0]
        lp += len(sizes) * np.log(hp.alpha0) + gammaln(sizes).sum() \
            - gammaln(hp.alpha0 + len(tabs)) + gammaln(hp.alpha0)
        for t in sorted(set(tabs)):
            table_topic.append(state.table_topic_label(j, t))
            table_words.append(state.doc_tokens(j)[np.array(tabs) == t])
    labels, m_k = np.unique(table_topic, return_counts=True)
    m = len(table_topic)
    lp += len(m_k) * np.log(hp.gamma) + gammaln(m_k).sum() - gammaln(hp.gamma + m) + gammaln(hp.gamma)
    for lbl in labels:
        words = np.concatenate([w for w, k in zip(table_words, table_topic) if k == lbl])
        lp += log_f_full(np.bincount(words, minlength=hp.V), hp.eta)
    return lp / state.n_tokens


def test_trace_ratios_examples():
    state = build_state([[0, 0, 0, 1]], [[0, 0, 0, 1]], [{0: "a", 1: "b"}], HP)
    assert np.allclose(dg.trace_ratios(state), [0.75, 1.0])
    docs = [[0, 1, 2, 0, 1]]
    state = build_state(docs, [[0, 1, 2, 3, 4]], [{t: t for t in range(5)}], HP)
    assert np.allclose(dg.trace_ratios(state), [0.2, 0.4, 0.6, 0.8, 1.0])
    assert dg.trace_ratios(state)[-1] == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trace_ratios_monotone_and_end_at_one(seed):
    r = dg.trace_ratios(random_state(np.random.default_rng(seed)))
    assert np.all(np.diff(r) >= 0) and r[-1] == 1.0 and r[0] > 0


def test_cosine_similarity_extremes():
    hp = HyperParams(1.0, 1.0, 0.5, V=4)
    same = build_state([[0, 1], [0, 1]], [[0, 0], [0, 0]], [{0: "a"}, {0: "b"}], hp)
    assert dg.topic_cosine_similarities(same)[0][2] == pytest.approx(1.0)
    apart = build_state([[0, 1], [2, 3]], [[0, 0], [0, 0]], [{0: "a"}, {0: "b"}], hp)
    assert dg.topic_cosine_similarities(apart, smoothing=0.0)[0][2] == 0.0
    for _, _, s in dg.topic_cosine_similarities(random_state(np.random.default_rng(3), n_docs=6)):
        assert 0.0 <= s <= 1.0


def test_ground_truth_near_duplicates_are_most_similar():
    topics = synth.make_ground_truth_topics()
    unit = topics / np.linalg.norm(topics, axis=1, keepdims=True)
    sims = unit @ unit.T
    np.fill_diagonal(sims, -1)
    assert np.unravel_index(np.argmax(sims), sims.shape) in [(0, 1), (1, 0)]


def test_mode_diff_identical_and_offset():
    a = [row(i, -3.0 + 0.1 * np.sin(i)) for i in range(1, 20)]
    curve = dg.mode_diff_series(a, a, time="iteration")
    assert np.all(curve.y == 0.0)
    b = [row(i, r.per_word_joint_lp - 0.25) for i, r in zip(range(1, 20), a)]
    assert np.allclose(dg.mode_diff_series(a, b, time="iteration").y, 0.25)


def test_mode_diff_running_best_on_union_grid():
    a = [row(1, -5.0, 10), row(2, -4.0, 30), row(3, -4.5, 50)]
    b = [row(1, -4.8, 20), row(2, -4.9, 40)]
    curve = dg.mode_diff_series(a, b)
    assert curve.t.tolist() == [20.0, 30.0, 40.0, 50.0]
    assert np.allclose(curve.best_a, [-5.0, -4.0, -4.0, -4.0])
    assert np.allclose(curve.best_b, [-4.8, -4.8, -4.8, -4.8])
    with pytest.raises(ValueError):
        dg.mode_diff_series([], b)


def test_joint_lp_single_word():
    hp = HyperParams(1.0, 1.0, 0.5, V=2)
    state = build_state([[1]], [[0]], [{0: "a"}], hp)
    assert dg.per_word_joint_lp(state) == pytest.approx(np.log(0.5), abs=1e-12)
    assert dg.per_word_cond_ll(state) == pytest.approx(np.log(0.5), abs=1e-12)


def test_joint_lp_ignores_labels():
    docs = [[0, 1, 2], [2, 2]]
    a = build_state(docs, [[0, 0, 1], [0, 0]], [{0: "x", 1: "y"}, {0: "y"}], HP)
    b = a.copy()
    # topic x has a single table, so moving it to a fresh topic only relabels
    old = b.table_topic_label(0, 0)
    assert b.reassign_table_topic(0, 0, -1) != old
    assert set(b.topic_labels().tolist()) != set(a.topic_labels().tolist())
    assert dg.per_word_joint_lp(b) == pytest.approx(dg.per_word_joint_lp(a), abs=1e-12)


def test_joint_lp_drops_after_implausible_move():
    hp = HyperParams(1.0, 1.0, 0.1, V=2)
    docs = [[0] * 6, [1] * 6]
    good = build_state(docs, [[0] * 6, [0] * 6], [{0: "a"}, {0: "b"}], hp)
    bad = build_state(docs, [[0] * 6, [0] * 6], [{0: "a"}, {0: "a"}], hp)
    assert dg.per_word_joint_lp(bad) < dg.per_word_joint_lp(good)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_joint_lp_matches_scratch(seed):
    state = random_state(np.random.default_rng(seed))
    assert dg.per_word_joint_lp(state) == pytest.approx(scratch_joint(state), abs=1e-10)


def test_trace_round_trip(tmp_path):
    rows = [row(i, -2.0 - 1.0 / 3 * i, ms=1.5 * i) for i in range(1, 5)]
    rows[2].sm_split_accepted = 7
    dg.write_trace(rows, tmp_path / "trace.csv")
    assert dg.read_trace(tmp_path / "trace.csv") == rows
    header = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert header.split(",") == dg.TRACE_FIELDS


def fitted(seed=0, V=4):
    rng = np.random.default_rng(seed)
    docs = [rng.integers(0, V, size=8) for _ in range(6)]
    state = gibbs.init_sequential(Corpus.from_token_lists(docs, V), HyperParams(1.0, 1.0, 0.5, V), rng)
    for _ in range(5):
        gibbs.gibbs_sweep(state, rng)
    return state


def test_heldout_single_term_is_zero():
    rng = np.random.default_rng(0)
    docs = [np.zeros(5, dtype=np.int64) for _ in range(3)]
    state = gibbs.init_sequential(Corpus.from_token_lists(docs, 1), HyperParams(1.0, 1.0, 0.5, 1), rng)
    assert dg.heldout_per_word_ll([state], [[0, 0, 0], [0]]) == pytest.approx(0.0, abs=1e-12)


def test_heldout_properties():
    state = fitted()
    test = [[0, 1, 2, 3], [3, 3, 1], [2]]
    ll = dg.heldout_per_word_ll([state], test, n_sweeps=10)
    assert ll <= 0 and np.isfinite(ll)
    assert dg.heldout_per_word_ll([state], test[::-1], n_sweeps=10) == pytest.approx(ll, abs=1e-12)
    assert dg.heldout_per_word_ll([state], test, n_sweeps=10) == ll
    assert dg.heldout_per_word_ll([state, fitted(1)], test, n_sweeps=10) <= 0
    with pytest.raises(ValueError):
        dg.heldout_per_word_ll([], test)
    with pytest.raises(ValueError):
        dg.heldout_per_word_ll([state], [])


def test_heldout_does_not_touch_state():
    state = fitted()
    before = state.count_snapshot()
    dg.heldout_per_word_ll([state], [[0, 1], [2, 2, 3]])
    after = state.count_snapshot()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_transform_rows_sum_to_one():
    _, theta = dg.document_predictives(fitted(), [[0, 1, 2], [3]], n_sweeps=6)
    assert np.allclose(theta.sum(axis=1), 1.0)


def test_enumeration_two_words_one_term():
    # one document with two identical words; alpha0 = gamma = 1 and V = 1
    post = dg.exact_posterior_tiny([[0, 0]], HyperParams(1.0, 1.0, 0.5, V=1))
    probs = sorted(post.values(), reverse=True)
    assert np.allclose(probs, [0.5, 0.25, 0.25])
    assert post[(((0, 0),), (0,))] == pytest.approx(0.5)


def test_enumeration_normalizes_and_has_the_right_size():
    post = dg.exact_posterior_tiny([[0, 1], [1, 1]], HyperParams(0.7, 1.3, 0.5, V=2))
    assert sum(post.values()) == pytest.approx(1.0, abs=1e-12)
    # 2 x 2 table partitions; Bell(2), Bell(3), Bell(3), Bell(4) topic partitions
    assert len(post) == 2 + 5 + 5 + 15
    with pytest.raises(ValueError):
        dg.exact_posterior_tiny([[0] * 7], HyperParams(1.0, 1.0, 0.5, V=1))


def test_canonical_config_ignores_labels():
    docs = [[0, 1, 2], [2, 2]]
    a = build_state(docs, [[0, 0, 1], [0, 0]], [{0: "x", 1: "y"}, {0: "y"}], HP)
    b = build_state(docs, [[1, 1, 0], [0, 0]], [{1: "p", 0: "q"}, {0: "q"}], HP)
    assert dg.canonical_config(a) == dg.canonical_config(b) == (((0, 0, 1), (0, 0)), (0, 1, 1))


def test_total_variation():
    assert dg.total_variation({"a": 0.5, "b": 0.5}, {"a": 0.5, "b": 0.5}) == 0.0
    assert dg.total_variation({"a": 1.0}, {"b": 1.0}) == 1.0
    assert dg.total_variation({"a": 0.75, "b": 0.25}, {"a": 0.25, "b": 0.75}) == pytest.approx(0.5)
