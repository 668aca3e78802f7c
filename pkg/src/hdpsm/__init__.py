"""HDP topic models fitted by collapsed Gibbs sampling on the Chinese
restaurant franchise, with split-merge moves on the topic partition."""

from .corpus import (Corpus, CorpusFormatError, Document, Vocabulary, load_corpus,
                     load_vocab, split_train_test, write_corpus, write_vocab)
from .crf_state import FRESH, CrfState, HyperParams
from .estimator import HDPTopicModel, InvariantViolation, check_corpus
from .hyper import GammaPrior
from .marginals import TopicStats

__all__ = [
    "Corpus", "CorpusFormatError", "Document", "Vocabulary", "load_corpus", "load_vocab",
    "split_train_test", "write_corpus", "write_vocab", "FRESH", "CrfState", "HyperParams",
    "HDPTopicModel", "InvariantViolation", "check_corpus", "GammaPrior", "TopicStats",
]

__version__ = "0.1.0"
