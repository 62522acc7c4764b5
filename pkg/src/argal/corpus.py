"""Token-labeled argument corpora: loading, validation, splits, statistics.

A corpus is a flat list of pre-tokenized sentences.  Every token carries one
of three labels: PRO (supporting span), CON (opposing span), NON (everything
else).  Sentences belong to one of a small set of controversial topics and to
one of the canonical train/dev/test splits.

The canonical on-disk format is a UTF-8 TSV with five tab-separated fields
per row::

    id <TAB> topic <TAB> split <TAB> space-joined tokens <TAB> space-joined labels

An optional first line starting with ``#`` is treated as a header.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

LABELS = ("PRO", "CON", "NON")
LABEL_TO_INDEX = {name: i for i, name in enumerate(LABELS)}

SPLITS = ("train", "dev", "test")


class CorpusError(ValueError):
    """Raised for malformed corpus files or invalid sentence data."""


@dataclass(frozen=True)
class Sentence:
    """One pre-tokenized sentence with per-token gold labels."""

    id: str
    topic: str
    tokens: tuple[str, ...]
    gold_labels: tuple[str, ...]
    split: str

    def __post_init__(self) -> None:
        if len(self.tokens) < 1:
            raise CorpusError(f"sentence {self.id!r}: empty token list")
        if len(self.tokens) != len(self.gold_labels):
            raise CorpusError(
                f"sentence {self.id!r}: {len(self.tokens)} tokens but "
                f"{len(self.gold_labels)} labels"
            )
        for lab in self.gold_labels:
            if lab not in LABEL_TO_INDEX:
                raise CorpusError(f"sentence {self.id!r}: unknown label {lab!r}")
        if self.split not in SPLITS:
            raise CorpusError(f"sentence {self.id!r}: unknown split {self.split!r}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def label_indices(self) -> tuple[int, ...]:
        return tuple(LABEL_TO_INDEX[lab] for lab in self.gold_labels)


@dataclass(frozen=True)
class Corpus:
    """Immutable collection of sentences; safe for concurrent reads."""

    sentences: tuple[Sentence, ...]
    topics: frozenset[str] = field(default_factory=frozenset)
    mode: str = "in_domain"

    def __post_init__(self) -> None:
        topics = self.topics or frozenset(s.topic for s in self.sentences)
        object.__setattr__(self, "topics", frozenset(topics))
        seen: set[str] = set()
        for s in self.sentences:
            if s.id in seen:
                raise CorpusError(f"duplicate sentence id {s.id!r}")
            seen.add(s.id)
            if s.topic not in self.topics:
                raise CorpusError(f"sentence {s.id!r}: topic {s.topic!r} not in corpus topics")

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def by_id(self, sentence_id: str) -> Sentence:
        if not hasattr(self, "_index"):
            object.__setattr__(self, "_index", {s.id: s for s in self.sentences})
        return self._index[sentence_id]


def load_corpus(path: str | Path, format: str = "canonical_tsv") -> Corpus:
    """Load and validate a corpus from the canonical TSV format.

    Raises :class:`CorpusError` on malformed rows (naming the row number),
    token/label length mismatches, unknown labels, or duplicate ids.
    """
    if format != "canonical_tsv":
        raise CorpusError(f"unsupported corpus format {format!r}")
    path = Path(path)
    sentences: list[Sentence] = []
    with open(path, encoding="utf-8", newline="") as handle:
        for row_no, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if row_no == 1 and line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise CorpusError(f"{path}:{row_no}: expected 5 tab-separated fields, got {len(fields)}")
            sid, topic, split, token_str, label_str = fields
            tokens = tuple(token_str.split(" ")) if token_str else ()
            labels = tuple(label_str.split(" ")) if label_str else ()
            if len(tokens) != len(labels):
                raise CorpusError(
                    f"{path}:{row_no}: sentence {sid!r} has {len(tokens)} tokens "
                    f"but {len(labels)} labels"
                )
            try:
                sentences.append(Sentence(sid, topic, tokens, labels, split))
            except CorpusError as exc:
                raise CorpusError(f"{path}:{row_no}: {exc}") from exc
    if not sentences:
        raise CorpusError(f"{path}: no sentences")
    return Corpus(tuple(sentences))


def make_splits(
    corpus: Corpus,
    mode: str = "in_domain",
    held_out_topics: Iterable[str] = (),
) -> tuple[list[Sentence], list[Sentence], list[Sentence]]:
    """Partition a corpus into (train, dev, test) sentence lists.

    ``in_domain`` follows the split column verbatim.  ``cross_domain``
    additionally restricts train to topics outside ``held_out_topics`` and
    dev/test to the held-out topics.  Output order is corpus order, so the
    result is deterministic for a fixed corpus.
    """
    held_out = frozenset(held_out_topics)
    if mode not in ("in_domain", "cross_domain"):
        raise CorpusError(f"unknown split mode {mode!r}")
    if mode == "cross_domain":
        if not held_out or not held_out < corpus.topics:
            raise CorpusError(
                "cross_domain mode needs a nonempty strict subset of corpus topics "
                f"as held_out_topics, got {sorted(held_out)!r}"
            )

    def eligible(s: Sentence) -> bool:
        if mode == "in_domain":
            return True
        if s.split == "train":
            return s.topic not in held_out
        return s.topic in held_out

    train = [s for s in corpus if s.split == "train" and eligible(s)]
    dev = [s for s in corpus if s.split == "dev" and eligible(s)]
    test = [s for s in corpus if s.split == "test" and eligible(s)]
    if not train:
        raise CorpusError("empty train split after filtering")
    if not dev:
        raise CorpusError("empty dev split after filtering")
    return train, dev, test


@dataclass(frozen=True)
class CorpusStats:
    topic_counts: dict[str, int]
    label_token_counts: dict[str, int]
    split_sizes: dict[str, int]
    mean_sentence_length: float
    sentence_count: int
    token_count: int


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Exact per-topic, per-label, and split counts plus mean sentence length."""
    if len(corpus) == 0:
        raise CorpusError("empty corpus")
    topic_counts: Counter[str] = Counter()
    label_counts: Counter[str] = Counter(dict.fromkeys(LABELS, 0))
    split_sizes: Counter[str] = Counter(dict.fromkeys(SPLITS, 0))
    token_count = 0
    for s in corpus:
        topic_counts[s.topic] += 1
        split_sizes[s.split] += 1
        token_count += len(s)
        label_counts.update(s.gold_labels)
    return CorpusStats(
        topic_counts=dict(topic_counts),
        label_token_counts={lab: label_counts[lab] for lab in LABELS},
        split_sizes=dict(split_sizes),
        mean_sentence_length=token_count / len(corpus),
        sentence_count=len(corpus),
        token_count=token_count,
    )


def write_corpus(path: str | Path, sentences: Sequence[Sentence], header: bool = True) -> None:
    """Write sentences in the canonical TSV format (UTF-8, LF endings)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        if header:
            handle.write("# id\ttopic\tsplit\ttokens\tlabels\n")
        for s in sentences:
            handle.write(
                "\t".join((s.id, s.topic, s.split, " ".join(s.tokens), " ".join(s.gold_labels)))
                + "\n"
            )
