import numpy as np
import pytest

from argal.corpus import Corpus, Sentence
from argal.embeddings import EmbeddingTable


def build_sentence(sid, tokens, labels, topic="energy", split="train"):
    return Sentence(id=sid, topic=topic, tokens=tuple(tokens), gold_labels=tuple(labels), split=split)


def tiny_corpus(n_per_topic=30, topics=("energy", "wages"), seed=0, span_rate=0.5):
    """Small random corpus for fast engine/service tests.

    Vocabulary: per-topic cue words aN/bN (PRO/CON) and shared fillers fN.
    """
    rng = np.random.default_rng(seed)
    sentences = []
    for topic_idx, topic in enumerate(topics):
        for i in range(n_per_topic):
            split = "train" if i < int(n_per_topic * 0.7) else ("dev" if i < int(n_per_topic * 0.85) else "test")
            length = int(rng.integers(4, 9))
            tokens = [f"f{int(rng.integers(0, 10))}" for _ in range(length)]
            labels = ["NON"] * length
            if rng.random() < span_rate:
                span = int(rng.integers(1, min(3, length) + 1))
                start = int(rng.integers(0, length - span + 1))
                pol = "PRO" if rng.random() < 0.5 else "CON"
                prefix = "a" if pol == "PRO" else "b"
                for pos in range(start, start + span):
                    tokens[pos] = f"{prefix}{topic_idx}{int(rng.integers(0, 4))}"
                    labels[pos] = pol
            sentences.append(build_sentence(f"{topic}-{i:03d}", tokens, labels, topic, split))
    return Corpus(tuple(sentences))


def tiny_table(corpus, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    words = sorted({tok for s in corpus for tok in s.tokens})
    pro_dir = rng.normal(size=dim)
    con_dir = rng.normal(size=dim)
    vectors = {}
    for w in words:
        base = 0.3 * rng.normal(size=dim)
        if w.startswith("a"):
            base = base + pro_dir
        elif w.startswith("b"):
            base = base + con_dir
        vectors[w] = base
    return EmbeddingTable(vectors, dim)


@pytest.fixture(scope="session")
def small_corpus():
    return tiny_corpus()


@pytest.fixture(scope="session")
def small_table(small_corpus):
    return tiny_table(small_corpus)
