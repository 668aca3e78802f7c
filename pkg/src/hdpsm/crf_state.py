"""Latent state of the Chinese restaurant franchise: the table of every word
and the topic of every table, with all derived counts kept incrementally."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln

from . import _kernels as K
from .marginals import TopicStats, log_f_full

FRESH = -1
"""Pass as ``topic`` to request a never-used topic label."""


@dataclass
class HyperParams:
    alpha0: float
    gamma: float
    eta: float
    V: int

    def __post_init__(self):
        for name in ("alpha0", "gamma", "eta"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        if int(self.V) < 1:
            raise ValueError(f"V must be a positive integer, got {self.V}")
        self.V = int(self.V)


class CrfState:
    """Table and topic assignments for a corpus.

    ``tokens`` is a sequence of per-document term-id arrays (or a ``Corpus``).
    The state starts with every word unseated; use ``gibbs.init_sequential``
    to get a sampled starting point.
    """

    def __init__(self, tokens, hp: HyperParams, topic_capacity: int = 16):
        if hasattr(tokens, "token_lists"):
            tokens = tokens.token_lists()
        docs = [np.asarray(d, dtype=np.int64) for d in tokens]
        if not docs:
            raise ValueError("empty corpus")
        lengths = np.array([len(d) for d in docs], dtype=np.int64)
        if lengths.min() < 1:
            raise ValueError("documents must have at least one token")
        self.hp = hp
        self.tokens = np.concatenate(docs)
        if self.tokens.min() < 0 or self.tokens.max() >= hp.V:
            raise ValueError("term id out of range for vocabulary size")
        self.doc_start = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        self.doc_of_word = np.repeat(np.arange(len(docs), dtype=np.int64), lengths)
        N, D = len(self.tokens), len(docs)
        self.table_of_word = np.full(N, -1, dtype=np.int64)
        self.table_size = np.zeros(N, dtype=np.int64)
        self.table_topic = np.full(N, -1, dtype=np.int64)
        self.table_hw = np.zeros(D, dtype=np.int64)
        self.doc_tables = np.zeros(D, dtype=np.int64)
        cap = max(int(topic_capacity), 1)
        self.topic_tables = np.zeros(cap, dtype=np.int64)
        self.topic_words = np.zeros(cap, dtype=np.int64)
        self.topic_term = np.zeros((cap, hp.V), dtype=np.int64)
        self.topic_label = np.full(cap, -1, dtype=np.int64)
        self.ctr = np.zeros(5, dtype=np.int64)

    # -- array plumbing -------------------------------------------------

    def arrays(self) -> tuple:
        return (self.tokens, self.doc_start, self.doc_of_word, self.table_of_word,
                self.table_size, self.table_topic, self.table_hw, self.doc_tables,
                self.topic_tables, self.topic_words, self.topic_term,
                self.topic_label, self.ctr)

    @property
    def topic_capacity(self) -> int:
        return self.topic_label.shape[0]

    def reserve(self, n_free: int = 1) -> None:
        """Make sure at least ``n_free`` topic slots are unused."""
        need = self.n_topics + n_free
        cap = self.topic_capacity
        if need <= cap:
            return
        new_cap = max(need, 2 * cap)
        extra = new_cap - cap
        self.topic_tables = np.concatenate([self.topic_tables, np.zeros(extra, np.int64)])
        self.topic_words = np.concatenate([self.topic_words, np.zeros(extra, np.int64)])
        self.topic_term = np.concatenate(
            [self.topic_term, np.zeros((extra, self.hp.V), np.int64)])
        self.topic_label = np.concatenate([self.topic_label, np.full(extra, -1, np.int64)])

    def run_kernel(self, kernel, stop, *args) -> None:
        """Run a resumable kernel over positions ``[0, stop)``, growing topic
        storage whenever it stops early."""
        pos = 0
        while pos < stop:
            self.reserve(1)
            pos = kernel(self.arrays(), pos, *args)

    # -- sizes -------------------------------------------------------------

    @property
    def n_docs(self) -> int:
        return len(self.doc_start) - 1

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    @property
    def n_terms(self) -> int:
        return self.hp.V

    @property
    def n_topics(self) -> int:
        return int(self.ctr[K.N_TOPICS])

    @property
    def m_total(self) -> int:
        return int(self.ctr[K.M_TOTAL])

    @property
    def next_topic_label(self) -> int:
        return int(self.ctr[K.NEXT_LABEL])

    def doc_length(self, j: int) -> int:
        return int(self.doc_start[j + 1] - self.doc_start[j])

    def doc_tokens(self, j: int) -> np.ndarray:
        return self.tokens[self.doc_start[j]:self.doc_start[j + 1]]

    # -- lookups -----------------------------------------------------------

    def _word(self, j: int, i: int) -> int:
        if not 0 <= j < self.n_docs or not 0 <= i < self.doc_length(j):
            raise IndexError(f"no word ({j}, {i})")
        return int(self.doc_start[j] + i)

    def _table_slot(self, j: int, t: int) -> int:
        if not 0 <= j < self.n_docs or not 0 <= t < self.doc_length(j):
            raise IndexError(f"no table slot ({j}, {t})")
        return int(self.doc_start[j] + t)

    def _topic_slot(self, label: int) -> int:
        hits = np.flatnonzero(self.topic_label == label)
        if label < 0 or len(hits) != 1:
            raise KeyError(f"topic {label} is not active")
        return int(hits[0])

    def active_slots(self) -> np.ndarray:
        return np.flatnonzero(self.topic_label >= 0)

    def topic_labels(self) -> np.ndarray:
        return np.sort(self.topic_label[self.topic_label >= 0])

    def table_of(self, j: int, i: int) -> int:
        return int(self.table_of_word[self._word(j, i)])

    def is_table_active(self, j: int, t: int) -> bool:
        return bool(self.table_topic[self._table_slot(j, t)] >= 0)

    def table_topic_label(self, j: int, t: int) -> int:
        s = self.table_topic[self._table_slot(j, t)]
        if s < 0:
            raise KeyError(f"table ({j}, {t}) is not active")
        return int(self.topic_label[s])

    def topic_of_word(self, j: int, i: int) -> int:
        return self.table_topic_label(j, self.table_of(j, i))

    def tables_of_doc(self, j: int) -> list:
        base = self.doc_start[j]
        return [t for t in range(int(self.table_hw[j])) if self.table_topic[base + t] >= 0]

    def active_tables(self) -> list:
        """Active tables as ``(j, t)`` pairs in document-then-table order."""
        g = np.flatnonzero(self.table_topic >= 0)
        j = self.doc_of_word[g]
        return list(zip(j.tolist(), (g - self.doc_start[j]).tolist()))

    def table_tokens(self, j: int, t: int) -> np.ndarray:
        lo, hi = self.doc_start[j], self.doc_start[j + 1]
        return self.tokens[lo:hi][self.table_of_word[lo:hi] == t]

    def table_stats(self, j: int, t: int) -> TopicStats:
        return TopicStats.from_tokens(self.table_tokens(j, t), self.n_terms)

    def topic_stats(self, label: int) -> TopicStats:
        return TopicStats(self.topic_term[self._topic_slot(label)].copy())

    def topic_table_count(self, label: int) -> int:
        return int(self.topic_tables[self._topic_slot(label)])

    def word_topic_slots(self) -> np.ndarray:
        return self.table_topic[self.doc_start[self.doc_of_word] + self.table_of_word]

    # -- mutation ----------------------------------------------------------

    def seat_word(self, j: int, i: int, t: int, topic: int | None = None) -> None:
        """Seat word ``(j, i)`` at table ``t``.

        If ``t`` is not active it becomes a new table, and ``topic`` (an
        active label or ``FRESH``) is required.
        """
        w = self._word(j, i)
        assert self.table_of_word[w] < 0, f"word ({j}, {i}) is already seated"
        g = self._table_slot(j, t)
        if self.table_topic[g] >= 0:
            assert topic is None or topic == self.topic_label[self.table_topic[g]], \
                "cannot change the topic of an active table by seating a word"
            K.seat(self.arrays(), w, t, -1)
            return
        assert topic is not None, f"table ({j}, {t}) is inactive; a topic is required"
        if topic == FRESH:
            self.reserve(1)
            s = K.alloc_topic(self.arrays())
        else:
            s = self._topic_slot(topic)
        K.seat(self.arrays(), w, t, s)

    def unseat_word(self, j: int, i: int) -> None:
        w = self._word(j, i)
        assert self.table_of_word[w] >= 0, f"word ({j}, {i}) is not seated"
        K.unseat(self.arrays(), w)

    def reassign_table_topic(self, j: int, t: int, topic: int) -> int:
        """Move table ``(j, t)`` and all its words to ``topic`` (an active
        label or ``FRESH``). Returns the label the table ends up with."""
        g = self._table_slot(j, t)
        assert self.table_topic[g] >= 0, f"table ({j}, {t}) is not active"
        if topic == FRESH:
            self.reserve(1)
            s = K.alloc_topic(self.arrays())
        else:
            s = self._topic_slot(topic)
        K.move_table(self.arrays(), g, s)
        return int(self.topic_label[s])

    def copy(self) -> "CrfState":
        new = object.__new__(type(self))
        for name, value in vars(self).items():
            setattr(new, name, value.copy() if isinstance(value, np.ndarray) else value)
        new.hp = HyperParams(**asdict(self.hp))
        return new

    # -- consistency -----------------------------------------------------

    def count_snapshot(self) -> dict:
        """Label-keyed copy of every count, for exact before/after comparisons."""
        slots = self.active_slots()
        order = np.argsort(self.topic_label[slots])
        slots = slots[order]
        return {
            "table_of_word": self.table_of_word.copy(),
            "table_size": self.table_size.copy(),
            "table_topic": np.where(self.table_topic >= 0,
                                    self.topic_label[np.maximum(self.table_topic, 0)], -1),
            "doc_tables": self.doc_tables.copy(),
            "labels": self.topic_label[slots].copy(),
            "topic_tables": self.topic_tables[slots].copy(),
            "topic_words": self.topic_words[slots].copy(),
            "topic_term": self.topic_term[slots].copy(),
            "m_total": self.m_total,
        }

    def validate(self) -> list:
        """Recount everything from the assignments and report mismatches.

        Returns a list of human-readable violations; empty iff consistent.
        """
        problems = []
        N, G = self.n_tokens, self.n_tokens
        t = self.table_of_word
        if np.any(t < 0):
            problems.append(f"{int(np.sum(t < 0))} words are not seated")
            return problems
        lengths = np.diff(self.doc_start)
        if np.any(t >= lengths[self.doc_of_word]):
            problems.append("table index beyond document length")
            return problems
        g = self.doc_start[self.doc_of_word] + t
        size = np.bincount(g, minlength=G)
        for slot in np.flatnonzero(size != self.table_size):
            j = int(self.doc_of_word[slot])
            problems.append(f"table_size[{j},{slot - self.doc_start[j]}]: stored "
                            f"{self.table_size[slot]}, recount {size[slot]}")
        occupied = size > 0
        if np.any(self.table_topic[occupied] < 0):
            problems.append("word seated at a table without a topic")
            return problems
        if np.any(self.table_topic[~occupied] >= 0):
            problems.append("empty table still holds a topic")
        active = self.table_topic >= 0
        tslots = self.table_topic[active]
        if np.any(tslots >= self.topic_capacity) or np.any(self.topic_label[tslots] < 0):
            problems.append("table assigned to an inactive topic")
            return problems
        doc_tables = np.bincount(self.doc_of_word[np.flatnonzero(active)], minlength=self.n_docs)
        for j in np.flatnonzero(doc_tables != self.doc_tables):
            problems.append(f"m_j[{j}]: stored {self.doc_tables[j]}, recount {doc_tables[j]}")
        hw_ok = np.all([not np.any(active[self.doc_start[j] + self.table_hw[j]:self.doc_start[j + 1]])
                        for j in range(self.n_docs)])
        if not hw_ok:
            problems.append("active table beyond document high-water mark")
        cap = self.topic_capacity
        m_k = np.bincount(tslots, minlength=cap)
        ws = self.table_topic[g]
        n_k = np.bincount(ws, minlength=cap)
        n_kv = np.zeros((cap, self.hp.V), dtype=np.int64)
        np.add.at(n_kv, (ws, self.tokens), 1)
        for s in range(cap):
            name = f"topic {self.topic_label[s]}" if self.topic_label[s] >= 0 else f"free slot {s}"
            if m_k[s] != self.topic_tables[s]:
                problems.append(f"m_k[{name}]: stored {self.topic_tables[s]}, recount {m_k[s]}")
            if n_k[s] != self.topic_words[s]:
                problems.append(f"n_k[{name}]: stored {self.topic_words[s]}, recount {n_k[s]}")
            if not np.array_equal(n_kv[s], self.topic_term[s]):
                problems.append(f"n_kv[{name}]: per-term counts differ from recount")
            if self.topic_label[s] >= 0 and m_k[s] == 0:
                problems.append(f"{name} is active but has no tables")
        labels = self.topic_labels()
        if len(np.unique(labels)) != len(labels):
            problems.append("duplicate topic labels")
        if len(labels) and labels.max() >= self.next_topic_label:
            problems.append("topic label not below next_topic_label")
        if self.m_total != int(active.sum()):
            problems.append(f"m_total: stored {self.m_total}, recount {int(active.sum())}")
        if self.n_topics != len(labels):
            problems.append(f"K: stored {self.n_topics}, recount {len(labels)}")
        return problems

    # -- densities -------------------------------------------------------

    def log_partition_prior(self) -> float:
        """log p(t, k): product of the per-document table partitions and the
        corpus-level partition of tables into topics."""
        a, gam = self.hp.alpha0, self.hp.gamma
        slots = self.active_slots()
        m_k = self.topic_tables[slots]
        m = int(m_k.sum())
        lp_k = (len(slots) * np.log(gam) + gammaln(m_k).sum()
                - (gammaln(m + gam) - gammaln(gam)))
        n_j = np.diff(self.doc_start)
        sizes = self.table_size[self.table_topic >= 0]
        lp_t = (self.doc_tables.sum() * np.log(a) + gammaln(sizes).sum()
                - (gammaln(n_j + a) - gammaln(a)).sum())
        return float(lp_k + lp_t)

    def log_likelihood(self) -> float:
        """log p(x | t, k) with every topic integrated out."""
        rows = self.topic_term[self.active_slots()]
        if len(rows) == 0:
            return 0.0
        return float(np.sum(log_f_full(rows, self.hp.eta)))

    # -- persistence ---------------------------------------------------------

    def to_dict(self, **meta) -> dict:
        """JSON-ready dump. Topic labels are compacted to 0..K-1."""
        slots = self.active_slots()
        slots = slots[np.argsort(self.topic_label[slots])]
        relabel = {int(s): new for new, s in enumerate(slots)}
        documents = []
        for j in range(self.n_docs):
            base = int(self.doc_start[j])
            tables = self.tables_of_doc(j)
            documents.append({
                "tokens": self.doc_tokens(j).tolist(),
                "tables": self.table_of_word[base:self.doc_start[j + 1]].tolist(),
                "table_topics": {str(t): relabel[int(self.table_topic[base + t])] for t in tables},
                "table_sizes": {str(t): int(self.table_size[base + t]) for t in tables},
            })
        topics = []
        for s in slots:
            nz = np.flatnonzero(self.topic_term[s])
            topics.append({
                "label": relabel[int(s)],
                "tables": int(self.topic_tables[s]),
                "words": int(self.topic_words[s]),
                "terms": {str(int(v)): int(self.topic_term[s, v]) for v in nz},
            })
        return {
            "format": "hdpsm-state",
            "version": 1,
            "hyper": asdict(self.hp),
            "meta": meta,
            "next_topic_label": len(slots),
            "documents": documents,
            "topics": topics,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CrfState":
        """Rebuild a state from ``to_dict`` output, keeping the stored counts
        as they are so that ``validate`` can audit them."""
        if data.get("format") != "hdpsm-state":
            raise ValueError("not an hdpsm state dump")
        hp = HyperParams(**data["hyper"])
        docs = [d["tokens"] for d in data["documents"]]
        n_topics = len(data["topics"])
        state = cls(docs, hp, topic_capacity=max(n_topics, 1))
        for j, d in enumerate(data["documents"]):
            base = int(state.doc_start[j])
            n_j = state.doc_length(j)
            if len(d["tables"]) != n_j:
                raise ValueError(f"document {j}: table list length differs from token count")
            state.table_of_word[base:base + n_j] = d["tables"]
            if any(not 0 <= int(t) < n_j for t in [*d["table_topics"], *d["table_sizes"]]):
                raise ValueError(f"document {j}: table index outside 0..{n_j - 1}")
            for t, k in d["table_topics"].items():
                state.table_topic[base + int(t)] = int(k)
            for t, n in d["table_sizes"].items():
                state.table_size[base + int(t)] = int(n)
            tables = [int(t) for t in d["table_topics"]]
            state.doc_tables[j] = len(tables)
            state.table_hw[j] = max(tables) + 1 if tables else 0
        for topic in data["topics"]:
            s = int(topic["label"])
            if not 0 <= s < n_topics:
                raise ValueError(f"topic label {s} outside 0..{n_topics - 1}")
            state.topic_label[s] = s
            state.topic_tables[s] = int(topic["tables"])
            state.topic_words[s] = int(topic["words"])
            for v, c in topic["terms"].items():
                state.topic_term[s, int(v)] = int(c)
        state.ctr[K.M_TOTAL] = int(state.doc_tables.sum())
        state.ctr[K.N_TOPICS] = n_topics
        state.ctr[K.NEXT_LABEL] = int(data.get("next_topic_label", n_topics))
        return state

    def save(self, path, **meta) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(**meta), fh)

    @classmethod
    def load(cls, path) -> "CrfState":
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if not text.strip():
            raise ValueError(f"{path}: empty state file")
        return cls.from_dict(json.loads(text))


def validate(state: CrfState) -> list:
    return state.validate()


def log_partition_prior(state: CrfState) -> float:
    return state.log_partition_prior()
