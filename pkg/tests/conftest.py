import numpy as np
import pytest

from hdpsm import gibbs
from hdpsm.corpus import Corpus
from hdpsm.crf_state import FRESH, CrfState, HyperParams


def build_state(docs, tables, topics, hp):
    """State with explicit seating.

    ``tables[j][i]`` is the table of word i of document j and
    ``topics[j][t]`` an arbitrary group id for table t; equal ids share a
    topic across documents.
    """
    state = CrfState([np.asarray(d, dtype=np.int64) for d in docs], hp)
    label_of = {}
    for j, doc_tables in enumerate(tables):
        for i, t in enumerate(doc_tables):
            if state.is_table_active(j, t):
                state.seat_word(j, i, t)
                continue
            group = topics[j][t]
            state.seat_word(j, i, t, label_of.get(group, FRESH))
            label_of.setdefault(group, state.table_topic_label(j, t))
    return state


def random_state(rng, n_docs=4, max_len=6, V=3, hp=None, sweeps=2):
    hp = hp or HyperParams(alpha0=float(rng.uniform(0.3, 3)), gamma=float(rng.uniform(0.3, 3)),
                           eta=float(rng.uniform(0.1, 2)), V=V)
    docs = [rng.integers(0, V, size=int(rng.integers(1, max_len + 1))) for _ in range(n_docs)]
    state = gibbs.init_sequential(Corpus.from_token_lists(docs, V), hp, rng)
    for _ in range(sweeps):
        gibbs.gibbs_sweep(state, rng)
    return state


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
