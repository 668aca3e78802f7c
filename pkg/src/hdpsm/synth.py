"""Synthetic corpora with known topics.

The default setup is 100 documents of 50 words over a 12-term vocabulary,
drawn from 5 topics with at most 2 topics per document. Topics 0 and 1
(1-based: 1 and 2) are near duplicates: both put their highest mass, the
same for both, on terms 2..8, and differ only in which of terms 0/1 is
high and which is low. Topics 2..4 live on terms 9..11 and share nothing
with topics 0/1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Vocabulary

HIGH, LOW = 4.0, 1.0
SHARED = 2.0 * HIGH

# a realization of the default design whose true topic shares are close to
# uniform, so the recovered trace ratios can be compared to 0.2, 0.4, ...
DEFAULT_CORPUS_SEED = 28


def make_ground_truth_topics() -> np.ndarray:
    """The default 5 x 12 topic matrix (rows are distributions)."""
    topics = np.zeros((5, 12))
    topics[0, 2:9] = SHARED
    topics[1, 2:9] = SHARED
    topics[0, 0], topics[0, 1] = HIGH, LOW
    topics[1, 0], topics[1, 1] = LOW, HIGH
    for r, hi in zip((2, 3, 4), (9, 10, 11)):
        topics[r, 9:12] = LOW
        topics[r, hi] = HIGH
    return topics / topics.sum(axis=1, keepdims=True)


@dataclass
class SynthConfig:
    num_docs: int = 100
    words_per_doc: int = 50
    num_topics: int = 5
    vocab_size: int = 12
    max_topics_per_doc: int = 2
    topics_per_doc: str = "uniform"
    topic_matrix: np.ndarray | None = None

    def topics(self) -> np.ndarray:
        if self.topic_matrix is not None:
            topics = np.asarray(self.topic_matrix, dtype=float)
        elif (self.num_topics, self.vocab_size) == (5, 12):
            topics = make_ground_truth_topics()
        else:
            raise ValueError("topic_matrix is required unless num_topics=5 and vocab_size=12")
        return topics

    def validate(self) -> None:
        if min(self.num_docs, self.words_per_doc, self.num_topics,
               self.vocab_size, self.max_topics_per_doc) < 1:
            raise ValueError("all sizes must be positive")
        if self.topics_per_doc not in ("uniform", "max"):
            raise ValueError("topics_per_doc must be 'uniform' or 'max'")
        topics = self.topics()
        if topics.shape != (self.num_topics, self.vocab_size):
            raise ValueError(f"topic matrix shape {topics.shape} does not match "
                             f"({self.num_topics}, {self.vocab_size})")
        if np.any(topics < 0) or not np.allclose(topics.sum(axis=1), 1.0, atol=1e-12, rtol=0):
            raise ValueError("topic rows must be probability distributions")


def generate(config: SynthConfig, rng) -> tuple:
    """Draw a corpus; returns ``(corpus, truth)`` where ``truth[j]`` holds the
    true topic of every word of document ``j``.

    Each document picks its number of topics uniformly from
    1..max_topics_per_doc (or always the maximum, with
    ``topics_per_doc="max"``), that many distinct topics uniformly, and
    mixing weights uniformly on the simplex.
    """
    config.validate()
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    topics = config.topics()
    cmax = min(config.max_topics_per_doc, config.num_topics)
    docs, truth = [], []
    for _ in range(config.num_docs):
        c = cmax if config.topics_per_doc == "max" else int(rng.integers(1, cmax + 1))
        chosen = rng.choice(config.num_topics, size=c, replace=False)
        weights = rng.dirichlet(np.ones(c))
        z = chosen[rng.choice(c, size=config.words_per_doc, p=weights)]
        cdf = np.cumsum(topics[z], axis=1)
        cdf[:, -1] = 1.0
        words = (rng.random((config.words_per_doc, 1)) < cdf).argmax(axis=1)
        docs.append(words.astype(np.int64))
        truth.append(z.astype(np.int64))
    vocab = Vocabulary(tuple(f"word{v + 1}" for v in range(config.vocab_size)))
    return Corpus.from_token_lists(docs, vocab), truth


def write_truth(truth, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc", "position", "topic"])
        for j, z in enumerate(truth):
            for i, k in enumerate(z.tolist()):
                writer.writerow([j, i, k])
