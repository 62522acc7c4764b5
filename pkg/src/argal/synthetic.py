"""Synthetic argument-unit corpus generator for desk-scale experiments.

Generates a corpus of four topics with 250 sentences each (175 train /
38 dev / 37 test per topic) plus a matching 50-dimensional static embedding
table, built so that the full pipeline exhibits the qualitative behavior of
real argument-mining data at a tiny fraction of the cost:

* A bit under half of the sentences are entirely non-argumentative; the
  rest carry a single contiguous PRO or CON span.
* Cue vocabulary is organized in per-topic, per-polarity *groups*: the
  words of a group share a group direction in embedding space (plus small
  word noise), and different groups are mutually near-orthogonal.  A model
  resolves a whole group once it has seen any of its words in a labeled
  span, but learns nearly nothing about groups it has never seen.  Dev
  macro F1 is therefore driven by group coverage, which is what separates
  query strategies: uncertainty sampling hunts sentences whose tokens are
  still unresolved, covering groups almost linearly, while random sampling
  keeps re-sampling known groups.
* Content words share a per-topic direction, so sentence-mean vectors
  cluster by topic and cluster-based warm starts get balanced topic (and
  hence cue-group) coverage.

Filler words are few and frequent; they are learned almost immediately and
stop contributing uncertainty.

Running ``python -m argal.synthetic OUTDIR`` writes ``corpus.tsv`` and
``vectors.txt`` ready for the command-line harness.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from argal.corpus import Corpus, Sentence, write_corpus
from argal.embeddings import EmbeddingTable, save_embedding_table

TOPICS = ("energy", "wages", "schooling", "privacy")
SENTENCES_PER_TOPIC = 250
SPLIT_SIZES = {"train": 175, "dev": 38, "test": 37}
DIMENSION = 50

FILLER_WORDS = 15
CONTENT_WORDS_PER_TOPIC = 15
CUE_GROUPS_PER_POLARITY = 5
WORDS_PER_CUE_GROUP = 3
GROUP_FREQUENCY_DECAY = 2.35  # train-split group usage ~ 1/(g+1)^1.8; dev/test uniform
CUE_NORM = 5.0
TOPIC_NORM = 3.0  # content words carry a strong topic direction: sentence
# means separate by topic, which is what the clustering warm start uses
ARG_NORM = 3.0  # all cue words share one argumentativeness direction, so
# sentence means also separate argument-bearing sentences from pure-NON ones

SPAN_RATE = 0.6
MIN_LENGTH, MAX_LENGTH = 5, 10
MIN_SPAN, MAX_SPAN = 2, 4


def _vocabulary() -> dict[str, list]:
    """Word lists; cue entries are lists of per-group word lists."""
    vocab: dict[str, list] = {"filler": [f"w{i:03d}" for i in range(FILLER_WORDS)]}
    for t, topic in enumerate(TOPICS):
        vocab[f"content:{topic}"] = [f"t{t}c{i:02d}" for i in range(CONTENT_WORDS_PER_TOPIC)]
        for pol in ("pro", "con"):
            vocab[f"{pol}:{topic}"] = [
                [f"t{t}{pol[0]}{g}{w}" for w in range(WORDS_PER_CUE_GROUP)]
                for g in range(CUE_GROUPS_PER_POLARITY)
            ]
    return vocab


def _group_weights(count: int) -> np.ndarray:
    weights = 1.0 / (np.arange(1, count + 1) ** GROUP_FREQUENCY_DECAY)
    return weights / weights.sum()


def make_corpus(seed: int = 0, span_rate: float = SPAN_RATE) -> Corpus:
    """Build the synthetic corpus deterministically from a seed.

    Train sentences draw their cue group from a Zipf-like distribution, so
    tail groups appear in only a handful of pool sentences; dev and test
    draw groups uniformly, so every group carries equal evaluation weight.
    """
    rng = np.random.default_rng(seed)
    vocab = _vocabulary()
    zipf = _group_weights(CUE_GROUPS_PER_POLARITY)
    sentences: list[Sentence] = []
    for topic in TOPICS:
        neutral = vocab["filler"] + vocab[f"content:{topic}"]
        serial = 0
        for split, count in SPLIT_SIZES.items():
            for _ in range(count):
                length = int(rng.integers(MIN_LENGTH, MAX_LENGTH + 1))
                tokens = [neutral[i] for i in rng.integers(0, len(neutral), size=length)]
                labels = ["NON"] * length
                if rng.random() < span_rate:
                    span_len = int(rng.integers(MIN_SPAN, min(MAX_SPAN, length - 1) + 1))
                    start = int(rng.integers(0, length - span_len + 1))
                    polarity = "PRO" if rng.random() < 0.5 else "CON"
                    groups = vocab[f"{polarity.lower()}:{topic}"]
                    if split == "train":
                        group = groups[int(rng.choice(len(groups), p=zipf))]
                    else:
                        group = groups[int(rng.integers(0, len(groups)))]
                    for pos in range(start, start + span_len):
                        tokens[pos] = group[int(rng.integers(0, len(group)))]
                        labels[pos] = polarity
                sentences.append(
                    Sentence(
                        id=f"{topic}-{serial:04d}",
                        topic=topic,
                        tokens=tuple(tokens),
                        gold_labels=tuple(labels),
                        split=split,
                    )
                )
                serial += 1
    return Corpus(tuple(sentences))


def make_embeddings(seed: int = 0, dimension: int = DIMENSION) -> EmbeddingTable:
    """Static vectors: cue-group direction + word noise (+ topic direction)."""
    rng = np.random.default_rng(seed + 1)
    vocab = _vocabulary()

    def unit(v: np.ndarray) -> np.ndarray:
        return v / np.linalg.norm(v)

    non_dir = unit(rng.normal(size=dimension))
    arg_dir = unit(rng.normal(size=dimension))
    topic_dirs = {topic: unit(rng.normal(size=dimension)) for topic in TOPICS}

    vectors: dict[str, np.ndarray] = {}
    for word in vocab["filler"]:
        vectors[word] = 0.3 * rng.normal(size=dimension) + 0.8 * non_dir
    for topic in TOPICS:
        for word in vocab[f"content:{topic}"]:
            vectors[word] = (
                0.3 * rng.normal(size=dimension)
                + 0.8 * non_dir
                + TOPIC_NORM * topic_dirs[topic]
            )
        for pol in ("pro", "con"):
            for group in vocab[f"{pol}:{topic}"]:
                group_dir = unit(rng.normal(size=dimension))
                for word in group:
                    vectors[word] = (
                        CUE_NORM * group_dir
                        + ARG_NORM * arg_dir
                        + 0.3 * rng.normal(size=dimension)
                        + 0.2 * topic_dirs[topic]
                    )
    return EmbeddingTable(vectors, dimension)


def write_files(out_dir: str | Path, seed: int = 0) -> tuple[Path, Path]:
    """Write corpus.tsv and vectors.txt; returns the two paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus_path = out / "corpus.tsv"
    vectors_path = out / "vectors.txt"
    write_corpus(corpus_path, list(make_corpus(seed)))
    save_embedding_table(vectors_path, make_embeddings(seed))
    return corpus_path, vectors_path


def main(argv: list[str] | None = None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="Generate the synthetic demo corpus")
    parser.add_argument("out_dir", help="output directory for corpus.tsv and vectors.txt")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    corpus_path, vectors_path = write_files(args.out_dir, args.seed)
    print(f"wrote {corpus_path} and {vectors_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
