import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdpsm import gibbs
from hdpsm.crf_state import FRESH, CrfState, HyperParams, log_partition_prior, validate
from hdpsm.diagnostics import _set_partitions

from conftest import build_state, random_state

HP = HyperParams(alpha0=1.0, gamma=1.0, eta=0.5, V=3)


def snapshots_equal(a, b):
    return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def test_hyperparams_must_be_positive():
    for bad in [dict(alpha0=0), dict(gamma=-1), dict(eta=0), dict(V=0)]:
        with pytest.raises(ValueError):
            HyperParams(**{**dict(alpha0=1.0, gamma=1.0, eta=0.5, V=2), **bad})


def test_first_word_at_new_table():
    state = CrfState([np.array([0, 1])], HP)
    state.seat_word(0, 0, 0, FRESH)
    assert state.doc_tables[0] == 1 and state.table_size[0] == 1
    assert state.m_total == 1 and state.n_topics == 1


def test_seat_then_unseat_restores_counts():
    state = build_state([[0, 1, 2]], [[0, 0, 1]], [{0: "a", 1: "b"}], HP)
    state.unseat_word(0, 2)
    before = state.count_snapshot()
    state.seat_word(0, 2, 1, FRESH)
    state.unseat_word(0, 2)
    assert snapshots_equal(before, state.count_snapshot())
    state.seat_word(0, 2, 1, FRESH)
    assert validate(state) == []


def test_three_words_at_one_table():
    state = build_state([[0, 1, 1]], [[0, 0, 0]], [{0: "a"}], HP)
    assert state.table_size[0] == 3 and state.doc_tables[0] == 1
    assert state.topic_stats(state.topic_labels()[0]).total == 3


def test_seating_errors():
    state = build_state([[0, 1]], [[0, 0]], [{0: "a"}], HP)
    with pytest.raises(AssertionError):
        state.seat_word(0, 0, 0)
    state.unseat_word(0, 1)
    with pytest.raises(AssertionError):
        state.seat_word(0, 1, 1)
    with pytest.raises(AssertionError):
        state.unseat_word(0, 1)


def test_reassign_table_topic_fresh_and_back():
    state = build_state([[0, 1], [2]], [[0, 1], [0]], [{0: "a", 1: "a"}, {0: "b"}], HP)
    old = state.table_topic_label(0, 1)
    before = state.count_snapshot()
    new = state.reassign_table_topic(0, 1, FRESH)
    assert new >= state.next_topic_label - 1 and new != old
    assert state.n_topics == 3 and validate(state) == []
    state.reassign_table_topic(0, 1, old)
    assert state.n_topics == 2 and validate(state) == []
    after = state.count_snapshot()
    assert np.array_equal(after["topic_term"], before["topic_term"])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_unseat_reseat_sequences(seed):
    rng = np.random.default_rng(seed)
    state = random_state(rng, sweeps=0)
    for _ in range(30):
        j = int(rng.integers(state.n_docs))
        i = int(rng.integers(state.doc_length(j)))
        t = state.table_of(j, i)
        size = state.table_size[state._table_slot(j, t)]
        before = state.count_snapshot()
        state.unseat_word(j, i)
        if size > 1:
            state.seat_word(j, i, t)
            assert snapshots_equal(before, state.count_snapshot())
        else:
            labels = state.topic_labels().tolist()
            topic = labels[int(rng.integers(len(labels)))] if labels and rng.random() < 0.5 else FRESH
            state.seat_word(j, i, t, topic)
        assert validate(state) == []


def test_corruption_is_reported():
    state = build_state([[0, 1, 2], [2, 2]], [[0, 0, 1], [0, 0]], [{0: "a", 1: "b"}, {0: "b"}], HP)
    label = state.table_topic_label(1, 0)
    state.topic_words[state._topic_slot(label)] += 1
    problems = validate(state)
    assert problems == [f"n_k[topic {label}]: stored 4, recount 3"]


def test_other_corruptions():
    state = build_state([[0, 1, 2]], [[0, 0, 1]], [{0: "a", 1: "b"}], HP)
    s = state.copy()
    s.doc_tables[0] = 5
    assert any(p.startswith("m_j[0]") for p in validate(s))
    s = state.copy()
    s.table_size[0] = 1
    assert any(p.startswith("table_size[0,0]") for p in validate(s))
    s = state.copy()
    s.topic_term[s.table_topic[0], 0] += 1
    assert any("per-term" in p for p in validate(s))


def test_copy_is_independent():
    state = build_state([[0, 1]], [[0, 1]], [{0: "a", 1: "b"}], HP)
    clone = state.copy()
    clone.unseat_word(0, 1)
    clone.hp.alpha0 = 9.0
    assert state.table_of(0, 1) == 1 and state.hp.alpha0 == 1.0


def test_log_prior_one_table_three_words():
    state = build_state([[0, 0, 0]], [[0, 0, 0]], [{0: "a"}], HP)
    assert log_partition_prior(state) == pytest.approx(np.log(1 / 3))


def test_log_prior_single_table_corpus_level_is_zero():
    for g in (0.1, 1.0, 7.0):
        hp = HyperParams(alpha0=1.0, gamma=g, eta=0.5, V=3)
        assert build_state([[0]], [[0]], [{0: "a"}], hp).log_partition_prior() == \
            pytest.approx(0.0, abs=1e-12)


def all_configurations(lengths):
    for blocks in itertools.product(*(list(_set_partitions(n)) for n in lengths)):
        n_tables = [max(b) + 1 for b in blocks]
        for kb in _set_partitions(sum(n_tables)):
            topics, pos = [], 0
            for m in n_tables:
                topics.append({t: kb[pos + t] for t in range(m)})
                pos += m
            yield [list(b) for b in blocks], topics


@pytest.mark.parametrize("lengths", [[2], [3], [2, 1], [2, 2]])
@pytest.mark.parametrize("alpha0,gamma", [(1.0, 1.0), (0.4, 2.5)])
def test_prior_sums_to_one_over_all_configurations(lengths, alpha0, gamma):
    hp = HyperParams(alpha0=alpha0, gamma=gamma, eta=0.5, V=2)
    docs = [[0] * n for n in lengths]
    total = sum(np.exp(build_state(docs, t, k, hp).log_partition_prior())
                for t, k in all_configurations(lengths))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_labels_are_never_reused(rng):
    state = random_state(rng, n_docs=6, V=4, sweeps=0)
    seen = set(state.topic_labels().tolist())
    for _ in range(20):
        gibbs.gibbs_sweep(state, rng)
        labels = set(state.topic_labels().tolist())
        fresh = labels - seen
        assert all(lbl >= max(seen) + 1 for lbl in fresh) if seen else True
        seen |= labels
        assert max(labels) < state.next_topic_label


def test_dump_round_trip(tmp_path, rng):
    state = random_state(rng, n_docs=5, V=4)
    path = tmp_path / "s.json"
    state.save(path, iter=3)
    back = CrfState.load(path)
    assert validate(back) == []
    assert back.log_partition_prior() == pytest.approx(state.log_partition_prior(), abs=1e-12)
    assert back.log_likelihood() == pytest.approx(state.log_likelihood(), abs=1e-12)
    assert np.array_equal(back.table_of_word, state.table_of_word)
    assert json.loads(path.read_text())["meta"] == {"iter": 3}
    gibbs.gibbs_sweep(back, rng)
    assert validate(back) == []


def test_dump_corruption_and_errors(tmp_path, rng):
    data = random_state(rng, n_docs=3, V=3).to_dict()
    data["topics"][0]["words"] += 1
    assert validate(CrfState.from_dict(data)) != []
    empty = tmp_path / "e.json"
    empty.write_text("")
    with pytest.raises(ValueError):
        CrfState.load(empty)
    with pytest.raises(ValueError):
        CrfState.from_dict({"format": "other"})
