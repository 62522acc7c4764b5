"""Linear-chain CRF layer: scoring, exact inference, and gradients.

A path ``y_1..y_T`` over L labels is scored as::

    start[y_1] + sum_t emissions[t, y_t] + sum_t transitions[y_{t-1}, y_t] + end[y_T]

All normalization runs in log-space via overflow-safe log-sum-exp, so the
partition function, per-token marginals, and pairwise marginals are exact up
to float rounding for any T.  Viterbi ties break toward the lower label
index at every backpointer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class CrfLayer:
    """Transition/start/end score tables over L labels."""

    transitions: np.ndarray  # [L, L], score of label j following label i
    start_scores: np.ndarray  # [L]
    end_scores: np.ndarray  # [L]

    def __post_init__(self) -> None:
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.start_scores = np.asarray(self.start_scores, dtype=np.float64)
        self.end_scores = np.asarray(self.end_scores, dtype=np.float64)
        L = self.start_scores.shape[0]
        if self.transitions.shape != (L, L) or self.end_scores.shape != (L,):
            raise ValueError(
                f"inconsistent CRF shapes: transitions {self.transitions.shape}, "
                f"start {self.start_scores.shape}, end {self.end_scores.shape}"
            )
        for arr in (self.transitions, self.start_scores, self.end_scores):
            if not np.all(np.isfinite(arr)):
                raise ValueError("CRF scores must be finite")

    @property
    def num_labels(self) -> int:
        return self.start_scores.shape[0]

    @classmethod
    def zeros(cls, num_labels: int) -> "CrfLayer":
        return cls(
            transitions=np.zeros((num_labels, num_labels)),
            start_scores=np.zeros(num_labels),
            end_scores=np.zeros(num_labels),
        )


def _logsumexp(a: np.ndarray, axis: int | None = None) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())


def path_score(emissions: np.ndarray, crf: CrfLayer, labels: np.ndarray) -> float:
    """Unnormalized score of one label path."""
    labels = np.asarray(labels, dtype=np.intp)
    T = emissions.shape[0]
    score = crf.start_scores[labels[0]] + emissions[np.arange(T), labels].sum()
    score += crf.transitions[labels[:-1], labels[1:]].sum()
    score += crf.end_scores[labels[-1]]
    return float(score)


def _forward(emissions: np.ndarray, crf: CrfLayer) -> np.ndarray:
    """Log-space forward messages alpha[t, l] including start and emissions."""
    T, L = emissions.shape
    alpha = np.empty((T, L))
    alpha[0] = crf.start_scores + emissions[0]
    for t in range(1, T):
        # alpha[t, j] = em[t, j] + LSE_i(alpha[t-1, i] + trans[i, j])
        alpha[t] = emissions[t] + _logsumexp(alpha[t - 1][:, None] + crf.transitions, axis=0)
    return alpha


def _backward(emissions: np.ndarray, crf: CrfLayer) -> np.ndarray:
    """Log-space backward messages beta[t, l] including end scores."""
    T, L = emissions.shape
    beta = np.empty((T, L))
    beta[T - 1] = crf.end_scores
    for t in range(T - 2, -1, -1):
        beta[t] = _logsumexp(crf.transitions + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def crf_log_partition(emissions: np.ndarray, crf: CrfLayer) -> float:
    """log sum over all L^T paths of exp(path score)."""
    alpha = _forward(emissions, crf)
    return float(_logsumexp(alpha[-1] + crf.end_scores))


def crf_viterbi(emissions: np.ndarray, crf: CrfLayer) -> tuple[list[int], float]:
    """Highest-scoring path and its score; ties go to the lower label index."""
    T, L = emissions.shape
    delta = crf.start_scores + emissions[0]
    backptr = np.empty((T, L), dtype=np.intp)
    for t in range(1, T):
        cand = delta[:, None] + crf.transitions  # [from, to]
        backptr[t] = np.argmax(cand, axis=0)  # first (lowest) index on ties
        delta = emissions[t] + cand[backptr[t], np.arange(L)]
    delta = delta + crf.end_scores
    best_last = int(np.argmax(delta))
    path = [best_last]
    for t in range(T - 1, 0, -1):
        path.append(int(backptr[t, path[-1]]))
    path.reverse()
    return path, float(delta[best_last])


def crf_marginals(emissions: np.ndarray, crf: CrfLayer) -> np.ndarray:
    """Exact per-token marginal distributions [T, L]; each row sums to 1."""
    alpha = _forward(emissions, crf)
    beta = _backward(emissions, crf)
    log_z = _logsumexp(alpha[-1] + crf.end_scores)
    log_marg = alpha + beta - log_z
    probs = np.exp(log_marg)
    # Guard against rounding drift; rows are already 1 up to float error.
    return probs / probs.sum(axis=1, keepdims=True)


@dataclass
class CrfGradients:
    d_emissions: np.ndarray
    d_transitions: np.ndarray
    d_start: np.ndarray
    d_end: np.ndarray
    log_partition: float = field(default=0.0)


def nll_and_crf_gradients(
    emissions: np.ndarray, crf: CrfLayer, labels: np.ndarray
) -> tuple[float, CrfGradients]:
    """Negative log-likelihood of the gold path and exact gradients.

    The gradient of ``logZ - score(gold)`` w.r.t. each score table is the
    corresponding expected feature count minus the gold count: unary
    marginals for emissions/start/end, pairwise marginals for transitions.
    """
    labels = np.asarray(labels, dtype=np.intp)
    T, L = emissions.shape
    alpha = _forward(emissions, crf)
    beta = _backward(emissions, crf)
    log_z = float(_logsumexp(alpha[-1] + crf.end_scores))
    gold = path_score(emissions, crf, labels)
    nll = log_z - gold

    unary = np.exp(alpha + beta - log_z)  # [T, L]

    d_emissions = unary.copy()
    d_emissions[np.arange(T), labels] -= 1.0

    d_start = unary[0].copy()
    d_start[labels[0]] -= 1.0
    d_end = unary[-1].copy()
    d_end[labels[-1]] -= 1.0

    d_transitions = np.zeros((L, L))
    for t in range(T - 1):
        # P(y_t=i, y_{t+1}=j) = exp(alpha[t,i] + trans[i,j] + em[t+1,j] + beta[t+1,j] - logZ)
        pair = np.exp(
            alpha[t][:, None] + crf.transitions + (emissions[t + 1] + beta[t + 1])[None, :] - log_z
        )
        d_transitions += pair
        d_transitions[labels[t], labels[t + 1]] -= 1.0

    return nll, CrfGradients(d_emissions, d_transitions, d_start, d_end, log_z)


def _logsumexp_b(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)), axis=axis)


def batch_nll_and_crf_gradients(
    emissions: np.ndarray, crf: CrfLayer, labels: np.ndarray
) -> tuple[np.ndarray, CrfGradients]:
    """Vectorized :func:`nll_and_crf_gradients` for same-length sentences.

    ``emissions`` is [B, T, L], ``labels`` [B, T].  Returns per-sentence NLLs
    and gradients with the emission gradient batched [B, T, L] and the CRF
    table gradients summed over the batch.  Identical math to the
    single-sentence path, vectorized over the leading dimension.
    """
    B, T, L = emissions.shape
    labels = np.asarray(labels, dtype=np.intp)
    alpha = np.empty((T, B, L))
    alpha[0] = crf.start_scores[None, :] + emissions[:, 0]
    for t in range(1, T):
        alpha[t] = emissions[:, t] + _logsumexp_b(
            alpha[t - 1][:, :, None] + crf.transitions[None, :, :], axis=1
        )
    beta = np.empty((T, B, L))
    beta[T - 1] = crf.end_scores[None, :]
    for t in range(T - 2, -1, -1):
        beta[t] = _logsumexp_b(
            crf.transitions[None, :, :] + (emissions[:, t + 1] + beta[t + 1])[:, None, :], axis=2
        )
    log_z = _logsumexp_b(alpha[T - 1] + crf.end_scores[None, :], axis=1)  # [B]

    rows = np.arange(B)
    gold = crf.start_scores[labels[:, 0]] + crf.end_scores[labels[:, -1]]
    gold = gold + np.take_along_axis(emissions, labels[:, :, None], axis=2)[:, :, 0].sum(axis=1)
    if T > 1:
        gold = gold + crf.transitions[labels[:, :-1], labels[:, 1:]].sum(axis=1)
    nll = log_z - gold

    unary = np.exp(alpha.transpose(1, 0, 2) + beta.transpose(1, 0, 2) - log_z[:, None, None])
    d_emissions = unary.copy()
    steps = np.arange(T)
    d_emissions[rows[:, None], steps[None, :], labels] -= 1.0

    d_start = unary[:, 0].sum(axis=0)
    np.subtract.at(d_start, labels[:, 0], 1.0)
    d_end = unary[:, -1].sum(axis=0)
    np.subtract.at(d_end, labels[:, -1], 1.0)

    d_transitions = np.zeros((L, L))
    for t in range(T - 1):
        pair = np.exp(
            alpha[t][:, :, None]
            + crf.transitions[None, :, :]
            + (emissions[:, t + 1] + beta[t + 1])[:, None, :]
            - log_z[:, None, None]
        )
        d_transitions += pair.sum(axis=0)
        np.subtract.at(d_transitions, (labels[:, t], labels[:, t + 1]), 1.0)

    return nll, CrfGradients(d_emissions, d_transitions, d_start, d_end, 0.0)


def batch_viterbi(emissions: np.ndarray, crf: CrfLayer) -> np.ndarray:
    """Vectorized Viterbi for same-length sentences; returns paths [B, T]."""
    B, T, L = emissions.shape
    delta = crf.start_scores[None, :] + emissions[:, 0]
    backptr = np.empty((T, B, L), dtype=np.intp)
    for t in range(1, T):
        cand = delta[:, :, None] + crf.transitions[None, :, :]
        backptr[t] = np.argmax(cand, axis=1)
        delta = emissions[:, t] + np.take_along_axis(cand, backptr[t][:, None, :], axis=1)[:, 0, :]
    delta = delta + crf.end_scores[None, :]
    paths = np.empty((T, B), dtype=np.intp)
    paths[T - 1] = np.argmax(delta, axis=1)
    for t in range(T - 1, 0, -1):
        paths[t - 1] = backptr[t][np.arange(B), paths[t]]
    return paths.T
