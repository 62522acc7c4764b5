"""Frozen vector inputs: static word-vector tables and precomputed contextual stores.

Two sources feed the taggers and the clustering stages:

* :class:`EmbeddingTable` — a plain-text word-vector table
  (``word v1 ... vD`` per line).  Out-of-vocabulary tokens map to the zero
  vector.
* :class:`ContextualStore` — per-sentence precomputed token-vector matrices
  keyed by sentence id, stored in a small binary record format (header
  ``ACTX1``; per record: u32 LE id length, id bytes, u32 LE T, u32 LE D,
  T*D float32 LE values).  The same record layout with T=1 serves as the
  precomputed sentence-vector file format.

Both sources are immutable after load.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from argal.corpus import Sentence

CONTEXTUAL_MAGIC = b"ACTX1"


class EmbeddingError(ValueError):
    """Raised for malformed vector files or mismatched records."""


class EmbeddingTable:
    """Word -> vector lookup with a zero-vector OOV policy."""

    def __init__(self, vectors: Mapping[str, np.ndarray], dimension: int):
        self.dimension = int(dimension)
        self._vectors = {w: np.asarray(v, dtype=np.float64) for w, v in vectors.items()}
        for word, vec in self._vectors.items():
            if vec.shape != (self.dimension,):
                raise EmbeddingError(f"vector for {word!r} has shape {vec.shape}, expected ({self.dimension},)")
        self._zero = np.zeros(self.dimension, dtype=np.float64)

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, word: str) -> bool:
        return word in self._vectors

    def lookup(self, word: str) -> np.ndarray:
        """Vector for ``word``; the zero vector when out of vocabulary."""
        return self._vectors.get(word, self._zero)


class ContextualStore:
    """Sentence id -> precomputed token-vector matrix [T, D]."""

    def __init__(self, records: Mapping[str, np.ndarray], dimension: int):
        self.dimension = int(dimension)
        self._records = {}
        for sid, mat in records.items():
            arr = np.asarray(mat, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != self.dimension:
                raise EmbeddingError(f"record {sid!r} has shape {arr.shape}, expected [T, {self.dimension}]")
            self._records[sid] = arr

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in self._records

    def get(self, sentence_id: str) -> np.ndarray:
        if sentence_id not in self._records:
            raise EmbeddingError(f"no contextual record for sentence {sentence_id!r}")
        return self._records[sentence_id]


VectorSource = Union[EmbeddingTable, ContextualStore]


@dataclass(frozen=True)
class SentenceVector:
    vector: np.ndarray
    source: str  # "mean_pooled" | "precomputed"

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.vector)):
            raise EmbeddingError("sentence vector has non-finite entries")


def load_embedding_table(path: str | Path) -> EmbeddingTable:
    """Parse a text word-vector file, inferring the dimension from line one.

    Uses the decimal point regardless of locale.  Raises
    :class:`EmbeddingError` for inconsistent dimensions (with the line
    number), non-numeric fields, or an empty file.
    """
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    dimension: int | None = None
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            word, values = parts[0], parts[1:]
            if dimension is None:
                dimension = len(values)
                if dimension == 0:
                    raise EmbeddingError(f"{path}:{line_no}: no vector values")
            elif len(values) != dimension:
                raise EmbeddingError(
                    f"{path}:{line_no}: dimension {len(values)} differs from {dimension}"
                )
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingError(f"{path}:{line_no}: non-numeric field ({exc})") from exc
            vectors[word] = vec
    if dimension is None:
        raise EmbeddingError(f"{path}: empty embedding file")
    return EmbeddingTable(vectors, dimension)


def save_embedding_table(path: str | Path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for word in table._vectors:
            vec = table._vectors[word]
            handle.write(word + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def token_matrix(sentence: Sentence, source: VectorSource) -> np.ndarray:
    """Per-token input matrix [T, D] for a sentence.

    Static tables map each token independently (OOV -> zero row); contextual
    stores return the stored record, which must match the sentence length.
    """
    if isinstance(source, EmbeddingTable):
        return np.stack([source.lookup(tok) for tok in sentence.tokens])
    record = source.get(sentence.id)
    if record.shape[0] != len(sentence):
        raise EmbeddingError(
            f"contextual record for {sentence.id!r} has {record.shape[0]} rows, "
            f"sentence has {len(sentence)} tokens"
        )
    return record


def sentence_vector(sentence: Sentence, source: VectorSource) -> SentenceVector:
    """Arithmetic mean of the sentence's token vectors (OOV rows count as zeros)."""
    mat = token_matrix(sentence, source)
    return SentenceVector(vector=mat.mean(axis=0), source="mean_pooled")


def save_contextual_records(path: str | Path, records: Mapping[str, np.ndarray]) -> None:
    """Write id -> [T, D] float matrices in the ``ACTX1`` binary format."""
    with open(path, "wb") as handle:
        handle.write(CONTEXTUAL_MAGIC)
        for sid, mat in records.items():
            arr = np.ascontiguousarray(np.asarray(mat, dtype="<f4"))
            if arr.ndim != 2:
                raise EmbeddingError(f"record {sid!r} must be 2-D, got shape {arr.shape}")
            sid_bytes = sid.encode("utf-8")
            handle.write(struct.pack("<I", len(sid_bytes)))
            handle.write(sid_bytes)
            handle.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            handle.write(arr.tobytes(order="C"))


def load_contextual_records(path: str | Path) -> dict[str, np.ndarray]:
    """Read an ``ACTX1`` file back into id -> float32 matrices (bit-exact)."""
    path = Path(path)
    records: dict[str, np.ndarray] = {}
    with open(path, "rb") as handle:
        magic = handle.read(len(CONTEXTUAL_MAGIC))
        if magic != CONTEXTUAL_MAGIC:
            raise EmbeddingError(f"{path}: bad magic {magic!r}, expected {CONTEXTUAL_MAGIC!r}")
        while True:
            head = handle.read(4)
            if not head:
                break
            if len(head) != 4:
                raise EmbeddingError(f"{path}: truncated record header")
            (id_len,) = struct.unpack("<I", head)
            sid = handle.read(id_len).decode("utf-8")
            t, d = struct.unpack("<II", handle.read(8))
            payload = handle.read(t * d * 4)
            if len(payload) != t * d * 4:
                raise EmbeddingError(f"{path}: truncated record for {sid!r}")
            records[sid] = np.frombuffer(payload, dtype="<f4").reshape(t, d).copy()
    return records


def load_contextual_store(path: str | Path) -> ContextualStore:
    records = load_contextual_records(path)
    if not records:
        raise EmbeddingError(f"{path}: empty contextual store")
    dims = {mat.shape[1] for mat in records.values()}
    if len(dims) != 1:
        raise EmbeddingError(f"{path}: inconsistent dimensions {sorted(dims)}")
    return ContextualStore(records, dims.pop())


def load_sentence_vectors(path: str | Path) -> dict[str, SentenceVector]:
    """Load a precomputed sentence-vector file (ACTX1 records with T=1)."""
    records = load_contextual_records(path)
    vectors: dict[str, SentenceVector] = {}
    for sid, mat in records.items():
        if mat.shape[0] != 1:
            raise EmbeddingError(f"{path}: sentence-vector record {sid!r} has T={mat.shape[0]}, expected 1")
        vectors[sid] = SentenceVector(vector=mat[0].astype(np.float64), source="precomputed")
    return vectors
