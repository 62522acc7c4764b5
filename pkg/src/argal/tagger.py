"""Sequence taggers: emission backbone + CRF, training, decoding, posteriors.

A :class:`TaggerModel` bundles a backbone (``linear`` or ``bilstm``) with a
CRF layer over the three argument labels.  Training minimizes the CRF
negative log-likelihood with Adam on shuffled minibatches, monitors dev
macro F1 after every epoch, keeps the best parameters, and early-stops after
a patience window once the minimum epoch count is reached.  Everything is
driven by a single seeded generator, so a fixed seed reproduces the loss
trajectory bit for bit.

Checkpoints use a small versioned binary format (header ``ACRF1``): per
tensor a name, a shape, and float32 little-endian data; files round-trip
exactly.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from argal import backbones
from argal.corpus import LABELS
from argal.crf import (
    CrfLayer,
    batch_nll_and_crf_gradients,
    batch_viterbi,
    crf_marginals,
)
from argal.metrics import macro_f1

CHECKPOINT_MAGIC = b"ACRF1"

NUM_LABELS = len(LABELS)

# (input matrix [T, D], gold label indices [T]) pairs
TaggedExample = tuple[np.ndarray, Sequence[int]]


class TrainingError(RuntimeError):
    """Raised when training cannot proceed (empty data, non-finite loss)."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    minibatch: int = 64
    max_epochs: int = 100
    min_epochs: int = 10
    patience: int = 10

    def __post_init__(self) -> None:
        for name in ("learning_rate", "minibatch", "max_epochs", "min_epochs", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")


@dataclass
class TaggerModel:
    kind: str  # "linear" | "bilstm"
    input_dim: int
    hidden: int
    params: dict[str, np.ndarray]

    @classmethod
    def init(
        cls,
        kind: str,
        input_dim: int,
        rng: np.random.Generator,
        hidden: int = backbones.BILSTM_HIDDEN,
    ) -> "TaggerModel":
        """Seeded initialization: uniform(+-sqrt(1/fan_in)) weights, zero biases
        and zero CRF tables."""
        if kind == "linear":
            params = backbones.init_linear_params(rng, input_dim, NUM_LABELS)
        elif kind == "bilstm":
            params = backbones.init_bilstm_params(rng, input_dim, NUM_LABELS, hidden)
        else:
            raise ValueError(f"unknown backbone kind {kind!r}")
        params["crf_trans"] = np.zeros((NUM_LABELS, NUM_LABELS))
        params["crf_start"] = np.zeros(NUM_LABELS)
        params["crf_end"] = np.zeros(NUM_LABELS)
        return cls(kind=kind, input_dim=input_dim, hidden=hidden, params=params)

    @property
    def crf(self) -> CrfLayer:
        return CrfLayer(
            transitions=self.params["crf_trans"],
            start_scores=self.params["crf_start"],
            end_scores=self.params["crf_end"],
        )

    def copy(self) -> "TaggerModel":
        return TaggerModel(
            kind=self.kind,
            input_dim=self.input_dim,
            hidden=self.hidden,
            params={k: v.copy() for k, v in self.params.items()},
        )


def _batch_forward(
    model: TaggerModel,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    if x.ndim != 3 or x.shape[2] != model.input_dim:
        raise ValueError(f"input shape {x.shape} does not match input_dim {model.input_dim}")
    if model.kind == "linear":
        return backbones.linear_forward(model.params, x, training, rng)
    return backbones.bilstm_forward(model.params, x, training, rng)


def emissions(
    model: TaggerModel,
    token_matrix: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    """Per-token unnormalized label scores [T, L] plus the backprop cache."""
    x = np.asarray(token_matrix, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a [T, D] input matrix, got shape {x.shape}")
    em, cache = _batch_forward(model, x[None, :, :], training, rng)
    return em[0], cache


def _backbone_backward(model: TaggerModel, cache: dict, d_emissions: np.ndarray) -> dict[str, np.ndarray]:
    if model.kind == "linear":
        return backbones.linear_backward(model.params, cache, d_emissions)
    return backbones.bilstm_backward(model.params, cache, d_emissions)


def _length_groups(inputs: Sequence[np.ndarray]) -> list[tuple[int, list[int]]]:
    """Group positions by sentence length, in order of first occurrence."""
    groups: dict[int, list[int]] = {}
    for pos, x in enumerate(inputs):
        groups.setdefault(x.shape[0], []).append(pos)
    return list(groups.items())


def token_posteriors(
    model: TaggerModel, token_matrix: np.ndarray, mode: str = "softmax_emissions"
) -> np.ndarray:
    """Per-token label distributions [T, L].

    ``softmax_emissions`` (default) normalizes each emission row with a
    softmax; ``crf_marginals`` runs exact forward-backward instead.
    """
    em, _ = emissions(model, token_matrix, training=False)
    if mode == "softmax_emissions":
        shifted = em - em.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)
    if mode == "crf_marginals":
        return crf_marginals(em, model.crf)
    raise ValueError(f"unknown posterior mode {mode!r}")


def nll_and_gradient(
    model: TaggerModel,
    batch: Sequence[TaggedExample],
    training: bool = True,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean NLL over the batch and exact gradients for every parameter.

    Sentences of equal length are stacked and processed together; groups
    run in order of first occurrence, so the dropout stream is a
    deterministic function of (batch composition, rng state).
    """
    if not batch:
        raise TrainingError("empty batch")
    inputs = [np.asarray(x, dtype=np.float64) for x, _ in batch]
    total = 0.0
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    crf = model.crf
    for _, positions in _length_groups(inputs):
        x = np.stack([inputs[p] for p in positions])
        labels = np.stack([np.asarray(batch[p][1], dtype=np.intp) for p in positions])
        em, cache = _batch_forward(model, x, training=training, rng=rng)
        nll, cg = batch_nll_and_crf_gradients(em, crf, labels)
        total += float(nll.sum())
        grads["crf_trans"] += cg.d_transitions
        grads["crf_start"] += cg.d_start
        grads["crf_end"] += cg.d_end
        for name, g in _backbone_backward(model, cache, cg.d_emissions).items():
            grads[name] += g
    scale = 1.0 / len(batch)
    for name in grads:
        grads[name] *= scale
    return total * scale, grads


class Adam:
    """Adam with bias correction; iterates parameters in sorted key order."""

    def __init__(self, params: dict[str, np.ndarray], config: TrainConfig):
        self.config = config
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        c = self.config
        self.t += 1
        for name in sorted(params):
            g = grads[name]
            self.m[name] = c.adam_beta1 * self.m[name] + (1 - c.adam_beta1) * g
            self.v[name] = c.adam_beta2 * self.v[name] + (1 - c.adam_beta2) * g * g
            m_hat = self.m[name] / (1 - c.adam_beta1**self.t)
            v_hat = self.v[name] / (1 - c.adam_beta2**self.t)
            params[name] -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.adam_eps)


def predict_indices(model: TaggerModel, inputs: Sequence[np.ndarray]) -> list[list[int]]:
    crf = model.crf
    arrs = [np.asarray(x, dtype=np.float64) for x in inputs]
    out: list[list[int] | None] = [None] * len(arrs)
    for _, positions in _length_groups(arrs):
        x = np.stack([arrs[p] for p in positions])
        em, _ = _batch_forward(model, x, training=False)
        paths = batch_viterbi(em, crf)
        for row, pos in enumerate(positions):
            out[pos] = [int(v) for v in paths[row]]
    return out  # type: ignore[return-value]


def predict(model: TaggerModel, inputs: Sequence[np.ndarray]) -> list[list[str]]:
    """Viterbi label strings, one list per sentence (inference mode)."""
    return [[LABELS[i] for i in path] for path in predict_indices(model, inputs)]


@dataclass
class TrainResult:
    model: TaggerModel
    epochs_run: int
    best_dev_f1: float
    epoch_times: list[float] = field(default_factory=list)
    loss_history: list[float] = field(default_factory=list)
    dev_f1_history: list[float] = field(default_factory=list)


def train(
    kind: str,
    train_set: Sequence[TaggedExample],
    dev_set: Sequence[TaggedExample],
    config: TrainConfig,
    rng_seed: int,
    hidden: int = backbones.BILSTM_HIDDEN,
    dropout: bool = True,
) -> TrainResult:
    """Train a fresh seeded model; return the best-dev checkpoint.

    Stops at ``max_epochs``, or once ``min_epochs`` have run and dev macro F1
    has not improved for ``patience`` consecutive epochs.
    """
    if not train_set:
        raise TrainingError("empty train set")
    if not dev_set:
        raise TrainingError("empty dev set")
    rng = np.random.default_rng(rng_seed)
    if not train_set[0][0].size:
        raise TrainingError("empty input matrix")
    input_dim = train_set[0][0].shape[1]
    model = TaggerModel.init(kind, input_dim, rng, hidden)
    optimizer = Adam(model.params, config)
    dev_gold = [list(labels) for _, labels in dev_set]
    dev_inputs = [x for x, _ in dev_set]

    best = model.copy()
    best_f1 = -np.inf
    epochs_without_improvement = 0
    epochs_run = 0
    epoch_times: list[float] = []
    loss_history: list[float] = []
    dev_f1_history: list[float] = []

    n = len(train_set)
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, config.minibatch):
            batch = [train_set[i] for i in order[lo : lo + config.minibatch]]
            loss, grads = nll_and_gradient(model, batch, training=dropout, rng=rng)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss} at epoch {epoch}, batch offset {lo}"
                )
            optimizer.step(model.params, grads)
            epoch_loss += loss * len(batch)
        loss_history.append(epoch_loss / n)
        dev_f1 = macro_f1(dev_gold, predict_indices(model, dev_inputs))
        dev_f1_history.append(dev_f1)
        epoch_times.append(time.perf_counter() - started)
        epochs_run = epoch
        if dev_f1 > best_f1:
            best_f1 = dev_f1
            best = model.copy()
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
        if epoch >= config.min_epochs and epochs_without_improvement >= config.patience:
            break
    return TrainResult(
        model=best,
        epochs_run=epochs_run,
        best_dev_f1=float(best_f1),
        epoch_times=epoch_times,
        loss_history=loss_history,
        dev_f1_history=dev_f1_history,
    )


def save_model(path: str | Path, model: TaggerModel) -> None:
    """Serialize to the versioned ``ACRF1`` checkpoint format (float32 LE)."""
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        kind = model.kind.encode("ascii")
        handle.write(struct.pack("<I", len(kind)))
        handle.write(kind)
        handle.write(struct.pack("<III", model.input_dim, model.hidden, len(model.params)))
        for name in sorted(model.params):
            arr = np.ascontiguousarray(model.params[name], dtype="<f4")
            name_b = name.encode("ascii")
            handle.write(struct.pack("<I", len(name_b)))
            handle.write(name_b)
            handle.write(struct.pack("<I", arr.ndim))
            handle.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            handle.write(arr.tobytes(order="C"))


def load_model(path: str | Path) -> TaggerModel:
    path = Path(path)
    with open(path, "rb") as handle:
        magic = handle.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
        (kind_len,) = struct.unpack("<I", handle.read(4))
        kind = handle.read(kind_len).decode("ascii")
        input_dim, hidden, n_params = struct.unpack("<III", handle.read(12))
        params: dict[str, np.ndarray] = {}
        for _ in range(n_params):
            (name_len,) = struct.unpack("<I", handle.read(4))
            name = handle.read(name_len).decode("ascii")
            (ndim,) = struct.unpack("<I", handle.read(4))
            shape = struct.unpack(f"<{ndim}I", handle.read(4 * ndim))
            count = int(np.prod(shape)) if shape else 1
            data = handle.read(count * 4)
            if len(data) != count * 4:
                raise ValueError(f"{path}: truncated tensor {name!r}")
            params[name] = np.frombuffer(data, dtype="<f4").reshape(shape).astype(np.float64)
    return TaggerModel(kind=kind, input_dim=input_dim, hidden=hidden, params=params)


def sentence_state(model: TaggerModel, token_matrix: np.ndarray) -> np.ndarray:
    """BiLSTM sentence representation (concatenated final hidden states)."""
    if model.kind != "bilstm":
        raise ValueError("sentence_state is only defined for the bilstm backbone")
    return backbones.bilstm_final_states(model.params, np.asarray(token_matrix, dtype=np.float64))
