"""Flat key/value run configuration: parsing, validation, materialization.

A config file is plain text, one ``key = value`` per line, ``#`` comments.
Unknown keys are errors, so typos fail fast.  The same dictionary shape is
accepted over HTTP by the annotation service.

Example::

    corpus = data/corpus.tsv
    embeddings = static:data/vectors.txt
    model = lincrf
    strategy = uncertainty-entropy
    start = cold
    seeds = 1,2,3
    output = runs/entropy
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from argal import strategies as strat
from argal.clustering import load_reduced_points
from argal.corpus import Corpus, load_corpus, make_splits
from argal.embeddings import (
    load_contextual_store,
    load_embedding_table,
    load_sentence_vectors,
)
from argal.engine import ClusterSpec, EncodedData, RunSpec
from argal.tagger import TrainConfig


class ConfigError(ValueError):
    """Raised for unknown keys, bad values, or missing files.

    ``field`` names the offending key when known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


KNOWN_KEYS = {
    "corpus",
    "mode",
    "held_out_topics",
    "embeddings",
    "sentence_vectors",
    "model",
    "strategy",
    "start",
    "batch_size",
    "seeds",
    "budget",
    "output",
    "learning_rate",
    "minibatch",
    "max_epochs",
    "min_epochs",
    "patience",
    "posterior_mode",
    "cluster_algorithm",
    "cluster_param",
    "reducer",
    "reduced_points",
    "atlas_round_size",
    "hidden_size",
    "save_checkpoints",
    "baseline_f1",
    "oracle",
    "sweep_algorithms",
    "sweep_seed",
}

MODELS = ("lincrf", "bilstm-crf")
START_MODES = ("cold", "warm:kmeans", "warm:dbscan", "warm:agglomerative")
CLUSTER_ALGORITHMS = ("kmeans", "dbscan", "agglomerative")


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; reject unknown or duplicate keys."""
    values: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {line_no}: unknown key {key!r}", field=key)
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}", field=key)
        values[key] = value
    return values


def _require(values: Mapping[str, str], key: str) -> str:
    if key not in values or not values[key]:
        raise ConfigError(f"missing required key {key!r}", field=key)
    return values[key]


def _parse_int(values: Mapping[str, str], key: str, default: int | None) -> int | None:
    if key not in values:
        return default
    try:
        return int(values[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not an integer: {values[key]!r}", field=key) from exc


def _parse_float(values: Mapping[str, str], key: str, default: float | None) -> float | None:
    if key not in values:
        return default
    try:
        return float(values[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not a number: {values[key]!r}", field=key) from exc


def _parse_bool(values: Mapping[str, str], key: str, default: bool) -> bool:
    if key not in values:
        return default
    value = values[key].lower()
    if value in ("true", "yes", "1"):
        return True
    if value in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {values[key]!r}", field=key)


@dataclass
class RunConfig:
    """Validated run configuration; ``materialize`` loads the data."""

    corpus_path: Path
    embeddings_kind: str  # "static" | "contextual"
    embeddings_path: Path
    model: str
    strategy: str
    seeds: tuple[int, ...]
    mode: str = "in_domain"
    held_out_topics: tuple[str, ...] = ()
    sentence_vectors: str = "mean"  # "mean" | "precomputed"
    sentence_vectors_path: Path | None = None
    start: str = "cold"
    warm_algorithm: str | None = None
    batch_size: int = 64
    budget: int | None = None
    output: Path | None = None
    train_config: TrainConfig = field(default_factory=TrainConfig)
    posterior_mode: str = "softmax_emissions"
    cluster_algorithm: str | None = None
    cluster_param: float | None = None
    reducer: str = "pca"
    reduced_points_path: Path | None = None
    atlas_round_size: int = 8
    hidden_size: int = 200
    save_checkpoints: bool = False
    baseline_f1: float | None = None
    oracle: str = "gold"
    sweep_algorithms: tuple[str, ...] = ()
    sweep_seed: int = 0
    raw_text: str = ""

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}", field="config")
        text = path.read_text(encoding="utf-8")
        return cls.from_values(parse_config_text(text), raw_text=text, base_dir=path.parent)

    @classmethod
    def from_values(
        cls,
        values: Mapping[str, str],
        raw_text: str = "",
        base_dir: Path | None = None,
    ) -> "RunConfig":
        base = base_dir or Path.cwd()

        def respath(value: str) -> Path:
            p = Path(value)
            return p if p.is_absolute() else base / p

        corpus_path = respath(_require(values, "corpus"))
        if not corpus_path.exists():
            raise ConfigError(f"corpus: file not found: {corpus_path}", field="corpus")

        emb = _require(values, "embeddings")
        kind, _, emb_path_str = emb.partition(":")
        if kind not in ("static", "contextual") or not emb_path_str:
            raise ConfigError(
                f"embeddings: expected 'static:PATH' or 'contextual:PATH', got {emb!r}",
                field="embeddings",
            )
        embeddings_path = respath(emb_path_str)
        if not embeddings_path.exists():
            raise ConfigError(f"embeddings: file not found: {embeddings_path}", field="embeddings")

        sv = values.get("sentence_vectors", "mean")
        sv_kind, _, sv_path_str = sv.partition(":")
        sv_path = None
        if sv_kind == "mean":
            pass
        elif sv_kind == "precomputed" and sv_path_str:
            sv_path = respath(sv_path_str)
            if not sv_path.exists():
                raise ConfigError(
                    f"sentence_vectors: file not found: {sv_path}", field="sentence_vectors"
                )
        else:
            raise ConfigError(
                f"sentence_vectors: expected 'mean' or 'precomputed:PATH', got {sv!r}",
                field="sentence_vectors",
            )

        model = _require(values, "model")
        if model not in MODELS:
            raise ConfigError(f"model: expected one of {MODELS}, got {model!r}", field="model")

        strategy = _require(values, "strategy")
        if strategy not in strat.STRATEGY_IDS:
            raise ConfigError(
                f"strategy: expected one of {strat.STRATEGY_IDS}, got {strategy!r}",
                field="strategy",
            )

        start = values.get("start", "cold")
        if start not in START_MODES:
            raise ConfigError(f"start: expected one of {START_MODES}, got {start!r}", field="start")
        warm_algorithm = start.split(":", 1)[1] if start.startswith("warm:") else None

        mode = values.get("mode", "in_domain")
        if mode not in ("in_domain", "cross_domain"):
            raise ConfigError(f"mode: expected in_domain or cross_domain, got {mode!r}", field="mode")
        held_out = tuple(
            t.strip() for t in values.get("held_out_topics", "").split(",") if t.strip()
        )

        try:
            seeds = tuple(int(s) for s in _require(values, "seeds").split(",") if s.strip())
        except ValueError as exc:
            raise ConfigError(f"seeds: not a list of integers: {values['seeds']!r}", field="seeds") from exc
        if not seeds:
            raise ConfigError("seeds: need at least one seed", field="seeds")

        posterior_mode = values.get("posterior_mode", "softmax_emissions")
        if posterior_mode not in ("softmax_emissions", "crf_marginals"):
            raise ConfigError(
                f"posterior_mode: expected softmax_emissions or crf_marginals, got {posterior_mode!r}",
                field="posterior_mode",
            )

        cluster_algorithm = values.get("cluster_algorithm")
        if cluster_algorithm is not None and cluster_algorithm not in CLUSTER_ALGORITHMS:
            raise ConfigError(
                f"cluster_algorithm: expected one of {CLUSTER_ALGORITHMS}, got {cluster_algorithm!r}",
                field="cluster_algorithm",
            )
        cluster_param = _parse_float(values, "cluster_param", None)

        reducer = values.get("reducer", "pca")
        if reducer not in ("pca", "external"):
            raise ConfigError(f"reducer: expected pca or external, got {reducer!r}", field="reducer")
        reduced_points_path = None
        if "reduced_points" in values:
            reduced_points_path = respath(values["reduced_points"])
            if not reduced_points_path.exists():
                raise ConfigError(
                    f"reduced_points: file not found: {reduced_points_path}", field="reduced_points"
                )
        if reducer == "external" and reduced_points_path is None:
            raise ConfigError("reducer=external needs reduced_points", field="reduced_points")

        oracle = values.get("oracle", "gold")
        if oracle not in ("gold", "human"):
            raise ConfigError(f"oracle: expected gold or human, got {oracle!r}", field="oracle")

        sweep_algorithms = tuple(
            a.strip() for a in values.get("sweep_algorithms", "").split(",") if a.strip()
        )
        for algo in sweep_algorithms:
            if algo not in CLUSTER_ALGORITHMS:
                raise ConfigError(
                    f"sweep_algorithms: unknown algorithm {algo!r}", field="sweep_algorithms"
                )

        train_config = TrainConfig(
            learning_rate=_parse_float(values, "learning_rate", 0.001),
            minibatch=_parse_int(values, "minibatch", 64),
            max_epochs=_parse_int(values, "max_epochs", 100),
            min_epochs=_parse_int(values, "min_epochs", 10),
            patience=_parse_int(values, "patience", 10),
        )

        needs_clusters = strategy.startswith("cluster-") or warm_algorithm is not None
        effective_algorithm = cluster_algorithm or warm_algorithm
        if needs_clusters:
            if effective_algorithm is None:
                raise ConfigError(
                    f"strategy {strategy!r} / start {start!r} needs cluster_algorithm",
                    field="cluster_algorithm",
                )
            if cluster_param is None:
                raise ConfigError(
                    "cluster-based selection needs cluster_param (use sweep-clusters to pick one)",
                    field="cluster_param",
                )

        return cls(
            corpus_path=corpus_path,
            embeddings_kind=kind,
            embeddings_path=embeddings_path,
            model=model,
            strategy=strategy,
            seeds=seeds,
            mode=mode,
            held_out_topics=held_out,
            sentence_vectors=sv_kind,
            sentence_vectors_path=sv_path,
            start="warm" if warm_algorithm else "cold",
            warm_algorithm=warm_algorithm,
            batch_size=_parse_int(values, "batch_size", 64),
            budget=_parse_int(values, "budget", None),
            output=respath(values["output"]) if "output" in values else None,
            train_config=train_config,
            posterior_mode=posterior_mode,
            cluster_algorithm=effective_algorithm,
            cluster_param=cluster_param,
            reducer=reducer,
            reduced_points_path=reduced_points_path,
            atlas_round_size=_parse_int(values, "atlas_round_size", 8),
            hidden_size=_parse_int(values, "hidden_size", 200),
            save_checkpoints=_parse_bool(values, "save_checkpoints", False),
            baseline_f1=_parse_float(values, "baseline_f1", None),
            oracle=oracle,
            sweep_algorithms=sweep_algorithms,
            sweep_seed=_parse_int(values, "sweep_seed", 0),
            raw_text=raw_text,
        )

    # -- materialization --------------------------------------------------

    def load_corpus(self) -> Corpus:
        return load_corpus(self.corpus_path)

    def load_source(self):
        if self.embeddings_kind == "static":
            return load_embedding_table(self.embeddings_path)
        return load_contextual_store(self.embeddings_path)

    def build_data(self) -> EncodedData:
        corpus = self.load_corpus()
        train, dev, _ = make_splits(corpus, self.mode, self.held_out_topics)
        source = self.load_source()
        precomputed = None
        if self.sentence_vectors == "precomputed":
            assert self.sentence_vectors_path is not None
            precomputed = {
                sid: sv.vector
                for sid, sv in load_sentence_vectors(self.sentence_vectors_path).items()
            }
        return EncodedData.build(train, dev, source, precomputed)

    def cluster_spec(self) -> ClusterSpec | None:
        if self.cluster_algorithm is None or self.cluster_param is None:
            return None
        if self.cluster_algorithm == "kmeans":
            params = {"k": int(self.cluster_param)}
        elif self.cluster_algorithm == "dbscan":
            params = {"eps": float(self.cluster_param)}
        else:
            params = {"distance_threshold": float(self.cluster_param)}
        external = None
        if self.reducer == "external":
            assert self.reduced_points_path is not None
            external = load_reduced_points(self.reduced_points_path)
        return ClusterSpec(
            algorithm=self.cluster_algorithm,
            params=params,
            reducer=self.reducer,
            external_points=external,
        )

    def run_spec(self) -> RunSpec:
        return RunSpec(
            model=self.model,
            strategy=self.strategy,
            start=self.start,
            batch_size=self.batch_size,
            train_config=self.train_config,
            budget=self.budget,
            posterior_mode=self.posterior_mode,
            cluster=self.cluster_spec(),
            atlas_round_size=self.atlas_round_size,
            hidden=self.hidden_size,
        )
