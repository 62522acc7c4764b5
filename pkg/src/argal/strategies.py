"""Query-selection strategies for the batch-mode active-learning loop.

Every strategy consumes a view of the unlabeled pool and returns a
:class:`QueryBatch` of unique sentence ids, ``min(B, |pool|)`` of them.
Strategies never mutate the pool; the engine applies the batch.

Uncertainty scores are oriented so that higher means more uncertain:

* least confidence: ``1 - p(top label)``
* margin: ``1 - (p(top) - p(runner-up))``
* entropy: ``-sum p ln p``

Per-sequence scores are the token mean of the per-token scores.

Cluster-based strategies share one quota rule: the batch is split equally
over the non-noise clusters, the remainder goes round-robin to clusters in
decreasing size order, and clusters smaller than their quota contribute all
members with the deficit redistributed over the rest.

ATLAS (adaptive transfer sampling) buckets validation sentences by whether
the tagger got more than half their tokens right, trains a small binary
correctness model on those buckets, and then repeatedly: classifies the
pool, samples a few predicted-incorrect sentences at random, marks them as
correct for the binary model, and retrains it, until the batch is full.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from argal.clustering import ClusterModel
from argal.corpus import Sentence
from argal.tagger import Adam, TaggerModel, TrainConfig, predict_indices, token_posteriors

STRATEGY_IDS = (
    "random",
    "uncertainty-lc",
    "uncertainty-margin",
    "uncertainty-entropy",
    "cluster-random",
    "cluster-uncertainty-lc",
    "cluster-uncertainty-margin",
    "cluster-uncertainty-entropy",
    "cluster-representative",
    "cluster-diversity",
    "atlas",
)

CRITERION_BY_SUFFIX = {"lc": "least_confidence", "margin": "margin", "entropy": "entropy"}

ATLAS_ROUND_SIZE = 8
BINARY_HIDDEN = 128
BINARY_EPOCHS = 10


class StrategyError(ValueError):
    """Raised for invalid strategy inputs (empty pool, bad criterion)."""


class DegenerateBucketsError(StrategyError):
    """Raised when ATLAS cannot train: one prediction bucket is empty."""


@dataclass(frozen=True)
class UncertaintyScore:
    value: float
    criterion: str


@dataclass(frozen=True)
class QueryBatch:
    ids: tuple[str, ...]
    strategy: str
    episode: int = 0

    def __post_init__(self) -> None:
        if len(set(self.ids)) != len(self.ids):
            raise StrategyError("query batch ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class PoolItem:
    """One unlabeled sentence with its model input."""

    sentence: Sentence
    inputs: np.ndarray  # [T, D]

    @property
    def id(self) -> str:
        return self.sentence.id


def token_uncertainties(probs: np.ndarray, criterion: str) -> np.ndarray:
    """Per-token uncertainty scores for a [T, L] posterior matrix."""
    probs = np.asarray(probs, dtype=np.float64)
    if criterion == "least_confidence":
        return 1.0 - probs.max(axis=1)
    if criterion == "margin":
        top2 = np.sort(probs, axis=1)[:, -2:]
        return 1.0 - (top2[:, 1] - top2[:, 0])
    if criterion == "entropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(probs > 0, probs * np.log(probs), 0.0)
        return -terms.sum(axis=1)
    raise StrategyError(f"unknown uncertainty criterion {criterion!r}")


def sequence_uncertainty(probs: np.ndarray, criterion: str) -> UncertaintyScore:
    """Token-mean uncertainty of a sentence's posterior matrix."""
    return UncertaintyScore(
        value=float(token_uncertainties(probs, criterion).mean()), criterion=criterion
    )


def _check_pool(pool_size: int) -> None:
    if pool_size < 1:
        raise StrategyError("empty unlabeled pool")


def _batch_size(requested: int, pool_size: int) -> int:
    return min(requested, pool_size)


def select_random(
    pool_ids: Sequence[str], batch_size: int, rng: np.random.Generator, episode: int = 0
) -> QueryBatch:
    """Uniform sample without replacement from the pool."""
    _check_pool(len(pool_ids))
    take = _batch_size(batch_size, len(pool_ids))
    chosen = rng.choice(len(pool_ids), size=take, replace=False)
    return QueryBatch(ids=tuple(pool_ids[i] for i in chosen), strategy="random", episode=episode)


def pool_uncertainties(
    model: TaggerModel,
    pool: Sequence[PoolItem],
    criterion: str,
    posterior_mode: str = "softmax_emissions",
) -> dict[str, float]:
    return {
        item.id: sequence_uncertainty(
            token_posteriors(model, item.inputs, posterior_mode), criterion
        ).value
        for item in pool
    }


def select_uncertainty(
    model: TaggerModel,
    pool: Sequence[PoolItem],
    batch_size: int,
    criterion: str,
    posterior_mode: str = "softmax_emissions",
    episode: int = 0,
) -> QueryBatch:
    """Top-B most uncertain sentences; ties break by id ascending."""
    _check_pool(len(pool))
    scores = pool_uncertainties(model, pool, criterion, posterior_mode)
    ranked = sorted(scores, key=lambda sid: (-scores[sid], sid))
    take = _batch_size(batch_size, len(pool))
    return QueryBatch(
        ids=tuple(ranked[:take]), strategy=f"uncertainty-{_suffix(criterion)}", episode=episode
    )


def _suffix(criterion: str) -> str:
    for suffix, name in CRITERION_BY_SUFFIX.items():
        if name == criterion:
            return suffix
    raise StrategyError(f"unknown uncertainty criterion {criterion!r}")


def cluster_quotas(sizes: Sequence[int], batch: int) -> list[int]:
    """Split ``batch`` equally over clusters with the given member counts.

    The remainder goes round-robin to clusters in decreasing size order
    (ties to the lower cluster index); clusters smaller than their share
    contribute everything and the deficit is redistributed over the rest.
    Requires ``batch <= sum(sizes)``.
    """
    if batch > sum(sizes):
        raise StrategyError(f"batch {batch} exceeds available {sum(sizes)}")
    quotas = [0] * len(sizes)
    active = [c for c in range(len(sizes)) if sizes[c] > 0]
    remaining = batch
    while remaining > 0 and active:
        base, extra = divmod(remaining, len(active))
        order = sorted(active, key=lambda c: (-sizes[c], c))
        share = {c: base + (1 if rank < extra else 0) for rank, c in enumerate(order)}
        for c in active:
            grant = min(share[c], sizes[c] - quotas[c])
            quotas[c] += grant
            remaining -= grant
        active = [c for c in active if quotas[c] < sizes[c]]
    return quotas


def _cluster_index(
    pool: Sequence[PoolItem], cluster_model: ClusterModel
) -> tuple[list[list[int]], list[int]]:
    """Per-cluster pool positions plus noise positions.

    The cluster model must have been fitted on the pool's sentence vectors
    in pool order, so assignments align positionally.
    """
    if len(cluster_model.assignments) != len(pool):
        raise StrategyError(
            f"cluster model covers {len(cluster_model.assignments)} points, pool has {len(pool)}"
        )
    members: list[list[int]] = [[] for _ in range(cluster_model.num_clusters)]
    noise: list[int] = []
    for pos, assign in enumerate(cluster_model.assignments):
        if assign == -1:
            noise.append(pos)
        else:
            members[assign].append(pos)
    return members, noise


def select_cluster_random(
    pool: Sequence[PoolItem],
    batch_size: int,
    cluster_model: ClusterModel,
    rng: np.random.Generator,
    episode: int = 0,
) -> QueryBatch:
    """Equal random sampling from each cluster region.

    Noise points are skipped while clustered points remain; when the batch
    cannot be filled from clusters alone, the remainder comes uniformly from
    the noise pool so the batch always has min(B, |pool|) items.
    """
    _check_pool(len(pool))
    members, noise = _cluster_index(pool, cluster_model)
    if cluster_model.num_clusters == 0:
        warnings.warn("all points are noise; falling back to random selection", stacklevel=2)
        batch = select_random([item.id for item in pool], batch_size, rng, episode)
        return QueryBatch(ids=batch.ids, strategy="cluster-random", episode=episode)
    take = _batch_size(batch_size, len(pool))
    quotas = cluster_quotas([len(m) for m in members], min(take, sum(len(m) for m in members)))
    chosen: list[str] = []
    for cluster, quota in enumerate(quotas):
        if quota == 0:
            continue
        picks = rng.choice(len(members[cluster]), size=quota, replace=False)
        chosen.extend(pool[members[cluster][i]].id for i in picks)
    shortfall = take - len(chosen)
    if shortfall > 0:
        picks = rng.choice(len(noise), size=shortfall, replace=False)
        chosen.extend(pool[noise[i]].id for i in picks)
    return QueryBatch(ids=tuple(chosen), strategy="cluster-random", episode=episode)


def select_cluster_uncertainty(
    model: TaggerModel,
    pool: Sequence[PoolItem],
    batch_size: int,
    cluster_model: ClusterModel,
    criterion: str,
    posterior_mode: str = "softmax_emissions",
    episode: int = 0,
    rng: np.random.Generator | None = None,
) -> QueryBatch:
    """The most uncertain sentences, sampled equally from each cluster."""
    _check_pool(len(pool))
    strategy = f"cluster-uncertainty-{_suffix(criterion)}"
    members, noise = _cluster_index(pool, cluster_model)
    if cluster_model.num_clusters == 0:
        warnings.warn("all points are noise; falling back to random selection", stacklevel=2)
        fallback_rng = rng if rng is not None else np.random.default_rng(0)
        batch = select_random([item.id for item in pool], batch_size, fallback_rng, episode)
        return QueryBatch(ids=batch.ids, strategy=strategy, episode=episode)
    scores = pool_uncertainties(model, pool, criterion, posterior_mode)
    take = _batch_size(batch_size, len(pool))
    quotas = cluster_quotas([len(m) for m in members], min(take, sum(len(m) for m in members)))
    chosen: list[str] = []
    for cluster, quota in enumerate(quotas):
        ranked = sorted(
            members[cluster], key=lambda pos: (-scores[pool[pos].id], pool[pos].id)
        )
        chosen.extend(pool[pos].id for pos in ranked[:quota])
    shortfall = take - len(chosen)
    if shortfall > 0:  # clusters exhausted: most uncertain noise points fill in
        ranked_noise = sorted(noise, key=lambda pos: (-scores[pool[pos].id], pool[pos].id))
        chosen.extend(pool[pos].id for pos in ranked_noise[:shortfall])
    return QueryBatch(ids=tuple(chosen), strategy=strategy, episode=episode)


def _distance_ranked(
    pool: Sequence[PoolItem],
    points: np.ndarray,
    members: list[list[int]],
    cluster_model: ClusterModel,
    farthest: bool,
) -> list[list[int]]:
    ranked = []
    for cluster, positions in enumerate(members):
        center = cluster_model.centers[cluster]
        dist = {pos: float(np.linalg.norm(points[pos] - center)) for pos in positions}
        sign = -1.0 if farthest else 1.0
        ranked.append(sorted(positions, key=lambda pos: (sign * dist[pos], pool[pos].id)))
    return ranked


def select_cluster_representative(
    pool: Sequence[PoolItem],
    batch_size: int,
    cluster_model: ClusterModel,
    points: np.ndarray,
    rng: np.random.Generator | None = None,
    episode: int = 0,
) -> QueryBatch:
    """Sentences nearest each cluster center, sampled equally per cluster."""
    _check_pool(len(pool))
    members, noise = _cluster_index(pool, cluster_model)
    if cluster_model.num_clusters == 0:
        warnings.warn("all points are noise; falling back to random selection", stacklevel=2)
        fallback_rng = rng if rng is not None else np.random.default_rng(0)
        batch = select_random([item.id for item in pool], batch_size, fallback_rng, episode)
        return QueryBatch(ids=batch.ids, strategy="cluster-representative", episode=episode)
    take = _batch_size(batch_size, len(pool))
    quotas = cluster_quotas([len(m) for m in members], min(take, sum(len(m) for m in members)))
    ranked = _distance_ranked(pool, points, members, cluster_model, farthest=False)
    chosen: list[str] = []
    for cluster, quota in enumerate(quotas):
        chosen.extend(pool[pos].id for pos in ranked[cluster][:quota])
    shortfall = take - len(chosen)
    if shortfall > 0:  # clusters exhausted: noise joins by center proximity
        def nearest_center(pos: int) -> float:
            deltas = cluster_model.centers - points[pos]
            return float(np.sqrt((deltas**2).sum(axis=1)).min())

        ranked_noise = sorted(noise, key=lambda pos: (nearest_center(pos), pool[pos].id))
        chosen.extend(pool[pos].id for pos in ranked_noise[:shortfall])
    return QueryBatch(ids=tuple(chosen), strategy="cluster-representative", episode=episode)


def select_cluster_diversity(
    pool: Sequence[PoolItem],
    batch_size: int,
    cluster_model: ClusterModel,
    points: np.ndarray,
    rng: np.random.Generator | None = None,
    episode: int = 0,
) -> QueryBatch:
    """Outliers: farthest-from-center per cluster; noise points come first.

    DBSCAN noise is treated as a pseudo-cluster with the highest priority —
    it is drained (ranked by distance to the nearest cluster center,
    descending) before the per-cluster quotas apply.
    """
    _check_pool(len(pool))
    members, noise = _cluster_index(pool, cluster_model)
    if cluster_model.num_clusters == 0:
        warnings.warn("all points are noise; falling back to random selection", stacklevel=2)
        fallback_rng = rng if rng is not None else np.random.default_rng(0)
        batch = select_random([item.id for item in pool], batch_size, fallback_rng, episode)
        return QueryBatch(ids=batch.ids, strategy="cluster-diversity", episode=episode)
    take = _batch_size(batch_size, sum(len(m) for m in members) + len(noise))
    chosen: list[str] = []
    if noise:
        def nearest_center_distance(pos: int) -> float:
            deltas = cluster_model.centers - points[pos]
            return float(np.sqrt((deltas**2).sum(axis=1)).min())

        noise_ranked = sorted(noise, key=lambda pos: (-nearest_center_distance(pos), pool[pos].id))
        chosen.extend(pool[pos].id for pos in noise_ranked[:take])
    remaining = take - len(chosen)
    if remaining > 0:
        quotas = cluster_quotas([len(m) for m in members], remaining)
        ranked = _distance_ranked(pool, points, members, cluster_model, farthest=True)
        for cluster, quota in enumerate(quotas):
            chosen.extend(pool[pos].id for pos in ranked[cluster][:quota])
    return QueryBatch(ids=tuple(chosen), strategy="cluster-diversity", episode=episode)


# --- ATLAS -----------------------------------------------------------------


def bucket_predictions(
    model: TaggerModel, validation: Sequence[PoolItem]
) -> tuple[list[PoolItem], list[PoolItem]]:
    """Split validation sentences by per-token prediction accuracy.

    A sentence whose ratio of correctly predicted tokens exceeds 0.5 is
    bucketed as correct; a ratio of exactly 0.5 counts as incorrect.
    """
    if not validation:
        raise StrategyError("empty validation set")
    preds = predict_indices(model, [item.inputs for item in validation])
    correct: list[PoolItem] = []
    incorrect: list[PoolItem] = []
    for item, pred in zip(validation, preds):
        gold = item.sentence.label_indices
        ratio = sum(1 for g, p in zip(gold, pred) if g == p) / len(gold)
        (correct if ratio > 0.5 else incorrect).append(item)
    return correct, incorrect


@dataclass
class BinaryCorrectnessModel:
    """Two-layer scorer of sentence representations; outputs a single logit."""

    params: dict[str, np.ndarray]

    @classmethod
    def init(
        cls, input_dim: int, rng: np.random.Generator, hidden: int = BINARY_HIDDEN
    ) -> "BinaryCorrectnessModel":
        bound1 = np.sqrt(1.0 / input_dim)
        bound2 = np.sqrt(1.0 / hidden)
        return cls(
            params={
                "w1": rng.uniform(-bound1, bound1, size=(hidden, input_dim)),
                "b1": np.zeros(hidden),
                "w2": rng.uniform(-bound2, bound2, size=(1, hidden)),
                "b2": np.zeros(1),
            }
        )

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Logits for a batch of representations [N, D] -> [N]."""
        hidden = np.maximum(x @ self.params["w1"].T + self.params["b1"], 0.0)
        return (hidden @ self.params["w2"].T + self.params["b2"]).ravel()

    def predicts_correct(self, x: np.ndarray) -> np.ndarray:
        return self.logits(x) >= 0.0


def train_binary(
    representations: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
    epochs: int = BINARY_EPOCHS,
    minibatch: int = 64,
    learning_rate: float = 0.001,
) -> BinaryCorrectnessModel:
    """Train the correctness model with BCE-with-logits and Adam."""
    x = np.asarray(representations, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise StrategyError(f"bad binary training shapes {x.shape}, {y.shape}")
    if len(set(y.tolist())) < 2:
        raise DegenerateBucketsError("binary training needs both correct and incorrect examples")
    model = BinaryCorrectnessModel.init(x.shape[1], rng)
    config = TrainConfig(learning_rate=learning_rate, minibatch=minibatch)
    optimizer = Adam(model.params, config)
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, minibatch):
            idx = order[lo : lo + minibatch]
            xb, yb = x[idx], y[idx]
            pre = np.maximum(xb @ model.params["w1"].T + model.params["b1"], 0.0)
            logits = (pre @ model.params["w2"].T + model.params["b2"]).ravel()
            # BCE with logits: sigmoid(z) - y is the gradient w.r.t. z
            probs = 1.0 / (1.0 + np.exp(-logits))
            dz = (probs - yb) / len(idx)
            grads = {
                "w2": dz[None, :] @ pre,
                "b2": np.array([dz.sum()]),
            }
            d_hidden = np.outer(dz, model.params["w2"].ravel()) * (pre > 0)
            grads["w1"] = d_hidden.T @ xb
            grads["b1"] = d_hidden.sum(axis=0)
            optimizer.step(model.params, grads)
    return model


def atlas_select(
    model: TaggerModel,
    pool: Sequence[PoolItem],
    validation: Sequence[PoolItem],
    batch_size: int,
    representation: Callable[[PoolItem], np.ndarray],
    rng: np.random.Generator,
    round_size: int = ATLAS_ROUND_SIZE,
    episode: int = 0,
    on_event: Callable[[str, dict], None] | None = None,
) -> QueryBatch:
    """Adaptive transfer sampling.

    Buckets the validation set, then loops until the batch is full: train
    the binary model on the buckets, classify the remaining pool, draw
    ``round_size`` sentences at random from the predicted-incorrect subset
    (topping up from predicted-correct when short), flip them to correct
    and append them to the binary training set, and retrain in the next
    round.  The appended pseudo-labeled items live only inside this call;
    the returned ids reach the labeled set through the oracle.
    """
    _check_pool(len(pool))
    emit = on_event or (lambda kind, info: None)
    correct, incorrect = bucket_predictions(model, validation)
    emit("bucket", {"correct": len(correct), "incorrect": len(incorrect)})
    if not correct or not incorrect:
        raise DegenerateBucketsError(
            f"degenerate buckets: {len(correct)} correct, {len(incorrect)} incorrect"
        )
    train_x = [representation(item) for item in correct + incorrect]
    train_y = [1.0] * len(correct) + [0.0] * len(incorrect)

    remaining = list(range(len(pool)))
    pool_x = {pos: representation(pool[pos]) for pos in remaining}
    take = _batch_size(batch_size, len(pool))
    chosen: list[str] = []
    while len(chosen) < take:
        want = min(round_size, take - len(chosen))
        binary = train_binary(np.stack(train_x), np.array(train_y), rng)
        emit("train", {"training_size": len(train_x)})
        logits = binary.logits(np.stack([pool_x[pos] for pos in remaining]))
        predicted_incorrect = [p for p, z in zip(remaining, logits) if z < 0.0]
        predicted_correct = [p for p, z in zip(remaining, logits) if z >= 0.0]
        emit("classify", {"predicted_incorrect": len(predicted_incorrect)})
        picks: list[int] = []
        if predicted_incorrect:
            count = min(want, len(predicted_incorrect))
            sel = rng.choice(len(predicted_incorrect), size=count, replace=False)
            picks.extend(predicted_incorrect[i] for i in sel)
        shortfall = want - len(picks)
        if shortfall > 0:  # too few predicted incorrect: top up at random
            sel = rng.choice(len(predicted_correct), size=shortfall, replace=False)
            picks.extend(predicted_correct[i] for i in sel)
        emit("select", {"count": len(picks)})
        for pos in picks:
            train_x.append(pool_x[pos])
            train_y.append(1.0)  # flipped: assumed correct once labeled
            remaining.remove(pos)
            chosen.append(pool[pos].id)
        emit("flip", {"training_size": len(train_x)})
    return QueryBatch(ids=tuple(chosen), strategy="atlas", episode=episode)
