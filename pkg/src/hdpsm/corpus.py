"""Bag-of-words corpora in LDA-C format and their vocabularies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CorpusFormatError(ValueError):
    """Raised when a corpus or vocabulary file cannot be parsed."""


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple

    def __post_init__(self):
        if len(self.terms) == 0:
            raise ValueError("vocabulary must contain at least one term")
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("vocabulary contains duplicate terms")

    @classmethod
    def anonymous(cls, size: int) -> "Vocabulary":
        """Placeholder vocabulary ``w0, w1, ...`` when term strings are unknown."""
        return cls(tuple(f"w{i}" for i in range(size)))

    @property
    def size(self) -> int:
        return len(self.terms)

    def __len__(self):
        return len(self.terms)


@dataclass(frozen=True)
class Document:
    id: int
    tokens: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class Corpus:
    documents: tuple
    vocab: Vocabulary

    def __post_init__(self):
        if len(self.documents) == 0:
            raise ValueError("empty corpus")
        V = self.vocab.size
        for doc in self.documents:
            if len(doc.tokens) == 0:
                raise ValueError(f"document {doc.id} has no tokens")
            if doc.tokens.min() < 0 or doc.tokens.max() >= V:
                raise ValueError(f"document {doc.id} has a term id out of range")

    @classmethod
    def from_token_lists(cls, docs, vocab: Vocabulary | int) -> "Corpus":
        if isinstance(vocab, (int, np.integer)):
            vocab = Vocabulary.anonymous(int(vocab))
        documents = tuple(Document(j, np.asarray(tokens, dtype=np.int64))
                          for j, tokens in enumerate(docs))
        return cls(documents, vocab)

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    @property
    def n_tokens(self) -> int:
        return sum(len(d) for d in self.documents)

    @property
    def n_terms(self) -> int:
        return self.vocab.size

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def token_lists(self) -> list:
        return [d.tokens for d in self.documents]

    def doc_term_matrix(self) -> np.ndarray:
        X = np.zeros((self.n_docs, self.n_terms), dtype=np.int64)
        for j, doc in enumerate(self.documents):
            X[j] = np.bincount(doc.tokens, minlength=self.n_terms)
        return X


def load_vocab(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        terms = [line.rstrip("\r\n") for line in fh]
    if terms and terms[-1] == "":
        terms.pop()
    if not terms:
        raise CorpusFormatError(f"{path}: empty vocabulary")
    try:
        return Vocabulary(tuple(terms))
    except ValueError as exc:
        raise CorpusFormatError(f"{path}: {exc}") from None


def _parse_line(line: str, lineno: int, V: int) -> np.ndarray:
    fields = line.split()
    try:
        M = int(fields[0])
    except ValueError:
        raise CorpusFormatError(f"malformed pair count at line {lineno}") from None
    pairs = fields[1:]
    if M != len(pairs):
        raise CorpusFormatError(
            f"pair count mismatch at line {lineno}: header says {M}, found {len(pairs)}")
    ids = np.empty(M, dtype=np.int64)
    counts = np.empty(M, dtype=np.int64)
    for p, pair in enumerate(pairs):
        try:
            v, c = pair.split(":")
            ids[p], counts[p] = int(v), int(c)
        except ValueError:
            raise CorpusFormatError(f"malformed pair {pair!r} at line {lineno}") from None
    if M and (ids.min() < 0 or ids.max() >= V):
        raise CorpusFormatError(f"term id out of range at line {lineno}")
    if M and counts.min() <= 0:
        raise CorpusFormatError(f"nonpositive count at line {lineno}")
    if M == 0:
        raise CorpusFormatError(f"document with no tokens at line {lineno}")
    return np.repeat(ids, counts)


def load_corpus(path, vocab: Vocabulary | int) -> Corpus:
    """Read an LDA-C file (``M id:count id:count ...`` per line).

    Each ``v:c`` pair expands into ``c`` tokens of term ``v``, in file order.
    Line numbers in error messages are 1-based. Blank lines are skipped.
    """
    if isinstance(vocab, (int, np.integer)):
        vocab = Vocabulary.anonymous(int(vocab))
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            docs.append(_parse_line(line, lineno, vocab.size))
    if not docs:
        raise CorpusFormatError("empty corpus")
    return Corpus.from_token_lists(docs, vocab)


def write_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus:
            ids, counts = np.unique(doc.tokens, return_counts=True)
            pairs = " ".join(f"{v}:{c}" for v, c in zip(ids, counts))
            fh.write(f"{len(ids)} {pairs}\n")


def write_vocab(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for term in vocab.terms:
            fh.write(term + "\n")


def split_train_test(corpus: Corpus, train_fraction: float, rng) -> tuple:
    """Shuffle documents with ``rng`` and split them into train and test.

    ``round(train_fraction * D)`` documents go to the training corpus. Both
    halves keep the full vocabulary; documents are renumbered from 0.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    D = corpus.n_docs
    if D < 2:
        raise ValueError("need at least 2 documents to split")
    rng = np.random.default_rng(rng)
    order = rng.permutation(D)
    n_train = int(round(train_fraction * D))
    n_train = min(max(n_train, 1), D - 1)
    train = [corpus.documents[j].tokens for j in order[:n_train]]
    test = [corpus.documents[j].tokens for j in order[n_train:]]
    return (Corpus.from_token_lists(train, corpus.vocab),
            Corpus.from_token_lists(test, corpus.vocab))
