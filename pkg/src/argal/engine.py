"""The active-learning loop: start batches, episodes, curves, thresholds.

One :class:`ActiveLearningRun` owns the world state of a single seeded run:
the labeled set L, the unlabeled pool U, and the validation set V.  The loop
is driven through three calls so that both the simulated gold oracle and the
HTTP annotation service produce identical trajectories::

    batch = run.initial_query()          # cold or warm start
    run.apply_labels(oracle(batch))
    while True:
        run.train_and_evaluate()         # retrain on L, record curve point
        if run.finished: break
        batch = run.next_query()         # strategy selection
        run.apply_labels(oracle(batch))

Each episode retrains a fresh seeded model on L, evaluates dev macro F1
*before* the episode's new batch is labeled (so the curve point at |L|
reflects a model trained on exactly |L| samples), then queries the strategy
and merges the newly labeled batch.  L and U stay disjoint and their union
is constant.

``run_experiment`` repeats the loop over seeds and averages the curves
pointwise; ``thresholds`` reports the smallest |L| whose mean-curve F1
reaches each percentage of the full-training baseline.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from argal import strategies as strat
from argal.clustering import ClusterModel, ReducedPoints, fit_clusters, reduce_2d
from argal.corpus import Sentence
from argal.embeddings import VectorSource, sentence_vector, token_matrix
from argal.metrics import macro_f1
from argal.strategies import DegenerateBucketsError, PoolItem, QueryBatch
from argal.tagger import TaggerModel, TrainConfig, predict_indices, sentence_state, train

DEFAULT_BATCH_SIZE = 64
THRESHOLD_PERCENTAGES = (0.90, 0.95, 0.99, 1.00)

MODEL_KINDS = {"lincrf": "linear", "bilstm-crf": "bilstm"}


class EngineError(RuntimeError):
    """Raised for invalid loop state or configuration."""


@dataclass(frozen=True)
class CurvePoint:
    labeled_count: int
    dev_macro_f1: float
    epoch_seconds_mean: float
    epochs_run: int


@dataclass(frozen=True)
class ClusterSpec:
    """How cluster-based selection builds its per-episode clustering."""

    algorithm: str
    params: dict
    reducer: str = "pca"
    external_points: np.ndarray | None = None  # aligned with the initial pool order


@dataclass(frozen=True)
class RunSpec:
    """Everything one seeded run needs besides the data itself."""

    model: str  # "lincrf" | "bilstm-crf"
    strategy: str
    start: str = "cold"  # "cold" | "warm"
    batch_size: int = DEFAULT_BATCH_SIZE
    train_config: TrainConfig = field(default_factory=TrainConfig)
    budget: int | None = None
    posterior_mode: str = "softmax_emissions"
    cluster: ClusterSpec | None = None
    atlas_round_size: int = strat.ATLAS_ROUND_SIZE
    hidden: int = 200

    def __post_init__(self) -> None:
        if self.model not in MODEL_KINDS:
            raise EngineError(f"unknown model {self.model!r}")
        if self.strategy not in strat.STRATEGY_IDS:
            raise EngineError(f"unknown strategy {self.strategy!r}")
        if self.start not in ("cold", "warm"):
            raise EngineError(f"unknown start mode {self.start!r}")
        needs_clusters = self.start == "warm" or self.strategy.startswith("cluster-")
        if needs_clusters and self.cluster is None:
            raise EngineError(f"strategy {self.strategy!r} / start {self.start!r} needs a cluster spec")


@dataclass
class EncodedData:
    """Corpus splits with model inputs and sentence vectors attached."""

    train_items: list[PoolItem]
    dev_items: list[PoolItem]
    sentence_vectors: dict[str, np.ndarray]

    @classmethod
    def build(
        cls,
        train: Sequence[Sentence],
        dev: Sequence[Sentence],
        source: VectorSource,
        precomputed_vectors: Mapping[str, np.ndarray] | None = None,
    ) -> "EncodedData":
        train_items = [PoolItem(s, token_matrix(s, source)) for s in train]
        dev_items = [PoolItem(s, token_matrix(s, source)) for s in dev]
        if precomputed_vectors is not None:
            vectors = {s.id: np.asarray(precomputed_vectors[s.id], dtype=np.float64) for s in train}
        else:
            vectors = {s.id: sentence_vector(s, source).vector for s in train}
        return cls(train_items=train_items, dev_items=dev_items, sentence_vectors=vectors)


class GoldOracle:
    """Simulated oracle returning the corpus gold labels."""

    def __init__(self, sentences: Mapping[str, Sentence] | Sequence[Sentence]):
        if isinstance(sentences, Mapping):
            self._by_id = dict(sentences)
        else:
            self._by_id = {s.id: s for s in sentences}

    def label_batch(self, batch: QueryBatch) -> dict[str, tuple[str, ...]]:
        return {sid: self._by_id[sid].gold_labels for sid in batch.ids}


class ActiveLearningRun:
    """State and stepper of one seeded active-learning run."""

    def __init__(self, data: EncodedData, spec: RunSpec, seed: int):
        self.data = data
        self.spec = spec
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.items_by_id = {item.id: item for item in data.train_items}
        self.pool_order = [item.id for item in data.train_items]
        self.labeled: list[str] = []
        self.labels: dict[str, tuple[str, ...]] = {}
        self.unlabeled: list[str] = list(self.pool_order)
        self.episode = 0
        self.curve: list[CurvePoint] = []
        self.model: TaggerModel | None = None
        self._pending: QueryBatch | None = None
        self._started = False

    # -- queries --------------------------------------------------------

    def initial_query(self) -> QueryBatch:
        """Cold (random) or warm (cluster random) start batch."""
        if self._started:
            raise EngineError("initial query already issued")
        self._started = True
        if self.spec.start == "cold":
            batch = strat.select_random(self.unlabeled, self.spec.batch_size, self.rng)
        else:
            pool = [self.items_by_id[sid] for sid in self.unlabeled]
            cluster_model, points = self._fit_pool_clusters(pool)
            batch = strat.select_cluster_random(
                pool, self.spec.batch_size, cluster_model, self.rng
            )
        self._pending = batch
        return batch

    def next_query(self) -> QueryBatch:
        if not self._started or self.model is None:
            raise EngineError("next_query before the first training episode")
        if self._pending is not None:
            raise EngineError("previous batch is still awaiting labels")
        if not self.unlabeled:
            raise EngineError("pool exhausted")
        batch = self._select(self.spec.strategy)
        self._pending = batch
        return batch

    def apply_labels(self, labels: Mapping[str, Sequence[str]]) -> None:
        """Merge a fully labeled batch from the oracle into L."""
        if self._pending is None:
            raise EngineError("no pending batch")
        missing = [sid for sid in self._pending.ids if sid not in labels]
        if missing:
            raise EngineError(f"missing labels for {missing[:3]}...")
        for sid in self._pending.ids:
            got = tuple(labels[sid])
            want = len(self.items_by_id[sid].sentence)
            if len(got) != want:
                raise EngineError(f"sentence {sid!r}: got {len(got)} labels, expected {want}")
            self.labels[sid] = got
            self.labeled.append(sid)
        pending = set(self._pending.ids)
        self.unlabeled = [sid for sid in self.unlabeled if sid not in pending]
        self._pending = None

    # -- training -------------------------------------------------------

    def train_and_evaluate(self) -> CurvePoint:
        """Retrain a fresh model on L, record the dev macro-F1 curve point."""
        if not self.labeled:
            raise EngineError("labeled set is empty; apply a start batch first")
        if self._pending is not None:
            raise EngineError("cannot train while a batch awaits labels")
        train_seed = int(self.rng.integers(0, 2**31 - 1))
        from argal.corpus import LABEL_TO_INDEX

        train_set = [
            (
                self.items_by_id[sid].inputs,
                [LABEL_TO_INDEX[lab] for lab in self.labels[sid]],
            )
            for sid in self.labeled
        ]
        dev_set = [
            (item.inputs, list(item.sentence.label_indices)) for item in self.data.dev_items
        ]
        result = train(
            MODEL_KINDS[self.spec.model],
            train_set,
            dev_set,
            self.spec.train_config,
            train_seed,
            hidden=self.spec.hidden,
        )
        self.model = result.model
        self.episode += 1
        point = CurvePoint(
            labeled_count=len(self.labeled),
            dev_macro_f1=result.best_dev_f1,
            epoch_seconds_mean=float(np.mean(result.epoch_times)),
            epochs_run=result.epochs_run,
        )
        self.curve.append(point)
        return point

    @property
    def finished(self) -> bool:
        if not self._started or self.episode == 0:
            return False
        if not self.unlabeled:
            return True
        return self.spec.budget is not None and len(self.labeled) >= self.spec.budget

    # -- strategy dispatch ------------------------------------------------

    def _fit_pool_clusters(self, pool: list[PoolItem]) -> tuple[ClusterModel, np.ndarray]:
        spec = self.spec.cluster
        assert spec is not None
        if spec.reducer == "external":
            if spec.external_points is None:
                raise EngineError("external reducer needs precomputed points")
            index = {sid: i for i, sid in enumerate(self.pool_order)}
            points = ReducedPoints(
                points=np.stack([spec.external_points[index[item.id]] for item in pool]),
                reducer="external",
            )
        else:
            vectors = np.stack([self.data.sentence_vectors[item.id] for item in pool])
            points = reduce_2d(vectors, reducer="pca")
        cluster_seed = int(self.rng.integers(0, 2**31 - 1))
        model = fit_clusters(points, spec.algorithm, spec.params, cluster_seed)
        return model, points.points

    def _select(self, strategy: str) -> QueryBatch:
        pool = [self.items_by_id[sid] for sid in self.unlabeled]
        B = self.spec.batch_size
        episode = self.episode
        model = self.model
        assert model is not None
        if strategy == "random":
            return strat.select_random(self.unlabeled, B, self.rng, episode)
        if strategy.startswith("uncertainty-"):
            criterion = strat.CRITERION_BY_SUFFIX[strategy.rsplit("-", 1)[1]]
            return strat.select_uncertainty(
                model, pool, B, criterion, self.spec.posterior_mode, episode
            )
        if strategy == "atlas":
            try:
                return strat.atlas_select(
                    model,
                    pool,
                    self.data.dev_items,
                    B,
                    representation=self._atlas_representation,
                    rng=self.rng,
                    round_size=self.spec.atlas_round_size,
                    episode=episode,
                )
            except DegenerateBucketsError as exc:
                warnings.warn(f"atlas fell back to random selection: {exc}", stacklevel=2)
                batch = strat.select_random(self.unlabeled, B, self.rng, episode)
                return QueryBatch(ids=batch.ids, strategy="atlas", episode=episode)
        cluster_model, points = self._fit_pool_clusters(pool)
        if strategy == "cluster-random":
            return strat.select_cluster_random(pool, B, cluster_model, self.rng, episode)
        if strategy.startswith("cluster-uncertainty-"):
            criterion = strat.CRITERION_BY_SUFFIX[strategy.rsplit("-", 1)[1]]
            return strat.select_cluster_uncertainty(
                model, pool, B, cluster_model, criterion, self.spec.posterior_mode, episode, self.rng
            )
        if strategy == "cluster-representative":
            return strat.select_cluster_representative(
                pool, B, cluster_model, points, self.rng, episode
            )
        if strategy == "cluster-diversity":
            return strat.select_cluster_diversity(
                pool, B, cluster_model, points, self.rng, episode
            )
        raise EngineError(f"unknown strategy {strategy!r}")

    def _atlas_representation(self, item: PoolItem) -> np.ndarray:
        if self.spec.model == "bilstm-crf":
            assert self.model is not None
            return sentence_state(self.model, item.inputs)
        if item.id in self.data.sentence_vectors:
            return self.data.sentence_vectors[item.id]
        return np.asarray(item.inputs, dtype=np.float64).mean(axis=0)


def cold_start(
    pool_ids: Sequence[str], n: int = DEFAULT_BATCH_SIZE, rng: np.random.Generator | None = None
) -> QueryBatch:
    """Random start batch of n ids."""
    return strat.select_random(pool_ids, n, rng if rng is not None else np.random.default_rng(0))


def warm_start(
    pool: Sequence[PoolItem],
    vectors: np.ndarray,
    algorithm: str,
    params: dict,
    n: int = DEFAULT_BATCH_SIZE,
    rng: np.random.Generator | None = None,
    reducer: str = "pca",
    external_path=None,
) -> QueryBatch:
    """Cluster the pool's sentence vectors and sample equally per cluster."""
    rng = rng if rng is not None else np.random.default_rng(0)
    points = reduce_2d(vectors, reducer=reducer, external_path=external_path)
    cluster_seed = int(rng.integers(0, 2**31 - 1))
    model = fit_clusters(points, algorithm, params, cluster_seed)
    return strat.select_cluster_random(pool, n, model, rng)


def evaluate(model: TaggerModel, items: Sequence[PoolItem]) -> float:
    """Dataset macro F1 (averaged across sequences) of Viterbi predictions."""
    if not items:
        raise EngineError("empty sentence list")
    preds = predict_indices(model, [item.inputs for item in items])
    golds = [list(item.sentence.label_indices) for item in items]
    return macro_f1(golds, preds)


def run_single(
    data: EncodedData, spec: RunSpec, seed: int, checkpoint_dir=None
) -> list[CurvePoint]:
    """One seeded gold-oracle run until the pool or budget is exhausted."""
    run = ActiveLearningRun(data, spec, seed)
    oracle = GoldOracle([item.sentence for item in data.train_items])
    run.apply_labels(oracle.label_batch(run.initial_query()))
    while True:
        run.train_and_evaluate()
        if checkpoint_dir is not None:
            from argal.tagger import save_model

            save_model(
                checkpoint_dir / f"checkpoint.seed-{seed}.episode-{run.episode}.acrf", run.model
            )
        if run.finished:
            return run.curve
        run.apply_labels(oracle.label_batch(run.next_query()))


@dataclass
class RunArtifact:
    spec: RunSpec
    seeds: tuple[int, ...]
    curves: dict[int, list[CurvePoint]]  # seed -> curve
    baseline_per_seed: dict[int, float]
    baseline: float

    @property
    def mean_curve(self) -> list[tuple[int, float]]:
        return mean_curve(list(self.curves.values()))


def mean_curve(curves: Sequence[Sequence[CurvePoint]]) -> list[tuple[int, float]]:
    """Pointwise mean of dev F1 at matching labeled counts."""
    if not curves:
        return []
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise EngineError(f"curves have differing lengths {sorted(lengths)}")
    out = []
    for idx in range(lengths.pop()):
        counts = {c[idx].labeled_count for c in curves}
        if len(counts) != 1:
            raise EngineError(f"curves disagree on labeled count at index {idx}")
        out.append((counts.pop(), float(np.mean([c[idx].dev_macro_f1 for c in curves]))))
    return out


def baseline_f1(data: EncodedData, spec: RunSpec, seeds: Sequence[int]) -> dict[int, float]:
    """Best dev macro F1 when training on the entire train pool, per seed."""
    out: dict[int, float] = {}
    train_set = [
        (item.inputs, list(item.sentence.label_indices)) for item in data.train_items
    ]
    dev_set = [(item.inputs, list(item.sentence.label_indices)) for item in data.dev_items]
    for seed in seeds:
        result = train(
            MODEL_KINDS[spec.model],
            train_set,
            dev_set,
            spec.train_config,
            int(seed),
            hidden=spec.hidden,
        )
        out[int(seed)] = result.best_dev_f1
    return out


def _run_single_star(args) -> tuple[int, list[CurvePoint]]:
    data, spec, seed, checkpoint_dir = args
    return seed, run_single(data, spec, seed, checkpoint_dir)


def run_experiment(
    data: EncodedData,
    spec: RunSpec,
    seeds: Sequence[int],
    baseline: float | None = None,
    max_workers: int | None = None,
    checkpoint_dir=None,
) -> RunArtifact:
    """Run all seeds, compute the baseline (unless given), collect curves.

    ``max_workers`` defaults to the AAL_THREADS environment variable (1 =
    sequential).  Runs are independent, so parallel execution changes
    nothing but wall time.
    """
    if not seeds:
        raise EngineError("need at least one seed")
    if max_workers is None:
        max_workers = int(os.environ.get("AAL_THREADS", "1"))
    curves: dict[int, list[CurvePoint]] = {}
    if max_workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            jobs = [(data, spec, s, checkpoint_dir) for s in seeds]
            for seed, curve in pool.map(_run_single_star, jobs):
                curves[seed] = curve
    else:
        for seed in seeds:
            curves[int(seed)] = run_single(data, spec, int(seed), checkpoint_dir)
    if baseline is None:
        per_seed = baseline_f1(data, spec, seeds)
        baseline_value = float(np.mean(list(per_seed.values())))
    else:
        per_seed = {}
        baseline_value = float(baseline)
    return RunArtifact(
        spec=spec,
        seeds=tuple(int(s) for s in seeds),
        curves=curves,
        baseline_per_seed=per_seed,
        baseline=baseline_value,
    )


@dataclass(frozen=True)
class ThresholdReport:
    baseline: float
    entries: tuple[tuple[float, int | None], ...]  # (percentage, samples or None)

    def samples_at(self, percentage: float) -> int | None:
        for p, samples in self.entries:
            if abs(p - percentage) < 1e-12:
                return samples
        raise KeyError(percentage)


def thresholds(
    curve: Sequence[tuple[int, float]],
    baseline: float,
    percentages: Sequence[float] = THRESHOLD_PERCENTAGES,
) -> ThresholdReport:
    """Smallest labeled count whose mean-curve F1 reaches p * baseline."""
    if not curve:
        raise EngineError("empty curve")
    entries = []
    for p in percentages:
        target = p * baseline
        found = None
        for labeled_count, f1 in curve:
            if f1 >= target:
                found = labeled_count
                break
        entries.append((float(p), found))
    return ThresholdReport(baseline=float(baseline), entries=tuple(entries))
