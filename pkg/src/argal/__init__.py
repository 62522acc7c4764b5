"""Pool-based, batch-mode active learning for token-level argument unit tagging.

The package covers the full loop: corpora of token-labeled sentences
(PRO/CON/NON), frozen embedding inputs, CRF sequence taggers with linear or
BiLSTM emission backbones, clustering-driven warm starts, a family of query
selection strategies (random, uncertainty, cluster-based, adaptive transfer),
an experiment engine producing learning curves and sample-threshold reports,
a command-line harness, and an HTTP annotation service for human oracles.
"""

from argal.corpus import LABELS, Corpus, CorpusError, Sentence, corpus_stats, load_corpus, make_splits

__all__ = [
    "LABELS",
    "Corpus",
    "CorpusError",
    "Sentence",
    "corpus_stats",
    "load_corpus",
    "make_splits",
]

__version__ = "0.1.0"
