import numpy as np
import pytest

from hdpsm import synth
from hdpsm.synth import SynthConfig


def test_ground_truth_matrix():
    topics = synth.make_ground_truth_topics()
    assert topics.shape == (5, 12)
    assert np.allclose(topics.sum(axis=1), 1.0, atol=1e-12)
    # topics 0 and 1 share terms 2..8 exactly and mirror each other on 0/1
    assert np.array_equal(topics[0, 2:9], topics[1, 2:9])
    assert topics[0, 0] == topics[1, 1] > topics[0, 1] == topics[1, 0]
    assert topics[0, 2:9].min() > topics[0, :2].max()
    # the two groups have disjoint support
    assert np.all(topics[:2, 9:] == 0) and np.all(topics[2:, :9] == 0)


def test_default_corpus_shape_and_determinism():
    cfg = SynthConfig()
    corpus, truth = synth.generate(cfg, synth.DEFAULT_CORPUS_SEED)
    assert corpus.n_docs == 100 and corpus.n_tokens == 5000 and corpus.n_terms == 12
    assert all(len(z) == 50 for z in truth)
    assert all(len(set(z.tolist())) <= 2 for z in truth)
    tokens = np.concatenate(corpus.token_lists())
    assert tokens.min() >= 0 and tokens.max() < 12
    again, truth2 = synth.generate(cfg, synth.DEFAULT_CORPUS_SEED)
    assert all(np.array_equal(a, b) for a, b in zip(corpus.token_lists(), again.token_lists()))
    assert all(np.array_equal(a, b) for a, b in zip(truth, truth2))
    other, _ = synth.generate(cfg, synth.DEFAULT_CORPUS_SEED + 1)
    assert any(not np.array_equal(a, b) for a, b in zip(corpus.token_lists(), other.token_lists()))


def test_default_seed_has_balanced_topics():
    _, truth = synth.generate(SynthConfig(), synth.DEFAULT_CORPUS_SEED)
    shares = np.bincount(np.concatenate(truth), minlength=5) / 5000
    assert np.all(np.abs(shares - 0.2) < 0.05)


def test_single_topic_documents():
    _, truth = synth.generate(SynthConfig(max_topics_per_doc=1), 0)
    assert all(len(set(z.tolist())) == 1 for z in truth)


def test_max_topics_mode():
    _, truth = synth.generate(SynthConfig(topics_per_doc="max", words_per_doc=200), 0)
    used = np.array([len(set(z.tolist())) for z in truth])
    # a topic with a near-zero mixing weight can go unused in a document
    assert np.all(used <= 2) and np.mean(used == 2) > 0.9


def test_word_frequencies_follow_topics():
    # single-topic documents over 1e6 words: empirical term frequencies
    # approach the topic rows
    topics = synth.make_ground_truth_topics()
    cfg = SynthConfig(num_docs=100, words_per_doc=10000, max_topics_per_doc=1)
    corpus, truth = synth.generate(cfg, 7)
    counts = np.zeros((5, 12))
    for tokens, z in zip(corpus.token_lists(), truth):
        np.add.at(counts, (z, tokens), 1)
    freq = counts / counts.sum(axis=1, keepdims=True)
    assert np.max(np.abs(freq - topics)) < 0.005


def test_custom_topic_matrix_and_validation():
    cfg = SynthConfig(num_topics=2, vocab_size=3, topic_matrix=np.array([[1, 0, 0], [0, 0.5, 0.5]]))
    corpus, truth = synth.generate(cfg, 1)
    for tokens, z in zip(corpus.token_lists(), truth):
        assert np.all(tokens[z == 0] == 0) and np.all(tokens[z == 1] > 0)
    with pytest.raises(ValueError):
        synth.generate(SynthConfig(num_topics=3), 0)
    with pytest.raises(ValueError):
        synth.generate(SynthConfig(num_docs=0), 0)
    with pytest.raises(ValueError):
        synth.generate(SynthConfig(topics_per_doc="many"), 0)
    with pytest.raises(ValueError):
        synth.generate(SynthConfig(num_topics=1, vocab_size=2, topic_matrix=np.array([[0.7, 0.7]])), 0)


def test_write_truth(tmp_path):
    synth.write_truth([np.array([3, 1]), np.array([0])], tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines() == ["doc,position,topic", "0,0,3", "0,1,1", "1,0,0"]
