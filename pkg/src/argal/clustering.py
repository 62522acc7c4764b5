"""Clustering of 2-D sentence-vector projections and hyperparameter sweeps.

The pipeline is: project sentence vectors to two dimensions (PCA by default,
or a precomputed external reduction), fit one of three clusterers, score the
fit with three standard quality indices, and sweep each algorithm's single
hyperparameter over a fixed grid to pick a final value.

Algorithms:

* ``kmeans`` — k-means++ seeding (seeded RNG) followed by Lloyd iterations
  until the assignment is a fixpoint or 300 iterations; the per-iteration
  cost trajectory is kept on the fitted model.
* ``dbscan`` — density clustering with ``min_pts`` defaulting to 5.  Noise
  points get assignment -1.  Clusters are the connected components of core
  points; border points attach to their nearest core neighbor, which makes
  the result independent of point order.
* ``agglomerative`` — bottom-up Ward linkage on Euclidean distances (scipy),
  cut at a distance threshold.

Cluster centers are native for k-means; for the other algorithms each
cluster's center is its centroid (the k=1 k-means solution).

The sweep grids: k in 2..16 (stride 1), eps in 0.10..0.51 (stride 0.01),
distance threshold in 10..150 (stride 5).  Twenty seeded iterations are run;
for each quality metric the best grid value is averaged over iterations, and
the final parameter is the mean of the three per-metric values snapped to
the nearest grid point.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

REDUCED_MAGIC = b"ARED1"

QUALITY_METRICS = ("silhouette", "calinski_harabasz", "davies_bouldin")

KMEANS_GRID = tuple(range(2, 17))
DBSCAN_GRID = tuple(round(0.10 + 0.01 * i, 2) for i in range(42))  # 0.10 .. 0.51
AGGLOMERATIVE_GRID = tuple(range(10, 151, 5))  # 10 .. 150

SWEEP_ITERATIONS = 20
DBSCAN_MIN_PTS = 5
KMEANS_MAX_ITER = 300


class ClusteringError(ValueError):
    """Raised for invalid clustering parameters or degenerate inputs."""


class UndefinedMetricError(ClusteringError):
    """Raised when a quality metric is undefined (fewer than 2 clusters)."""


class SweepFailedError(ClusteringError):
    """Raised when no grid value produced a scorable clustering."""


@dataclass(frozen=True)
class ReducedPoints:
    points: np.ndarray  # [N, 2]
    reducer: str  # "pca" | "external"

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ClusteringError(f"reduced points must be [N, 2], got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ClusteringError("reduced points must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class ClusterModel:
    algorithm: str
    params: dict
    assignments: np.ndarray  # [N] int, -1 = noise (dbscan only)
    centers: np.ndarray  # [C, 2]
    cost_history: list[float] = field(default_factory=list)  # kmeans Lloyd costs

    @property
    def num_clusters(self) -> int:
        return self.centers.shape[0]

    def cluster_members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == cluster)

    @property
    def noise_members(self) -> np.ndarray:
        return np.flatnonzero(self.assignments == -1)


def reduce_2d(
    vectors: np.ndarray,
    reducer: str = "pca",
    rng_seed: int = 0,
    external_path: str | Path | None = None,
) -> ReducedPoints:
    """Project [N, D] vectors to two dimensions.

    PCA centers the data and projects onto the top-2 principal directions
    with a deterministic sign convention (first nonzero loading positive).
    ``external`` loads precomputed 2-D points from an ``ARED1`` file, for
    callers that ran their own reducer.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ClusteringError(f"need at least 2 points of dimension >= 2, got shape {x.shape}")
    if reducer == "external":
        if external_path is None:
            raise ClusteringError("external reducer needs external_path")
        pts = load_reduced_points(external_path)
        if pts.shape[0] != x.shape[0]:
            raise ClusteringError(
                f"external file has {pts.shape[0]} points, expected {x.shape[0]}"
            )
        return ReducedPoints(points=pts, reducer="external")
    if reducer != "pca":
        raise ClusteringError(f"unknown reducer {reducer!r}")
    centered = x - x.mean(axis=0)
    _, sing, vt = np.linalg.svd(centered, full_matrices=False)
    if sing[0] <= 1e-12:
        warnings.warn("zero-variance data; reduced points fall back to zeros", stacklevel=2)
        return ReducedPoints(points=np.zeros((x.shape[0], 2)), reducer="pca")
    components = vt[:2].copy()
    for row in components:
        nonzero = np.flatnonzero(np.abs(row) > 1e-12)
        if nonzero.size and row[nonzero[0]] < 0:
            row *= -1.0
    return ReducedPoints(points=centered @ components.T, reducer="pca")


def save_reduced_points(path: str | Path, points: np.ndarray) -> None:
    pts = np.ascontiguousarray(np.asarray(points, dtype="<f4"))
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ClusteringError(f"reduced points must be [N, 2], got {pts.shape}")
    with open(path, "wb") as handle:
        handle.write(REDUCED_MAGIC)
        handle.write(struct.pack("<I", pts.shape[0]))
        handle.write(pts.tobytes(order="C"))


def load_reduced_points(path: str | Path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as handle:
        magic = handle.read(len(REDUCED_MAGIC))
        if magic != REDUCED_MAGIC:
            raise ClusteringError(f"{path}: bad magic {magic!r}")
        (count,) = struct.unpack("<I", handle.read(4))
        payload = handle.read(count * 2 * 4)
        if len(payload) != count * 2 * 4:
            raise ClusteringError(f"{path}: truncated point data")
    return np.frombuffer(payload, dtype="<f4").reshape(count, 2).astype(np.float64)


def _pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def _kmeans_pp_centers(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def _fit_kmeans(points: np.ndarray, k: int, rng: np.random.Generator) -> ClusterModel:
    n = points.shape[0]
    if k > n:
        raise ClusteringError(f"k={k} exceeds point count {n}")
    centers = _kmeans_pp_centers(points, k, rng)
    assignments = np.full(n, -1, dtype=np.intp)
    costs: list[float] = []
    for _ in range(KMEANS_MAX_ITER):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)  # ties to the lower center index
        costs.append(float(d2[np.arange(n), new_assign].sum()))
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        for c in range(k):
            members = points[assignments == c]
            if members.size:  # empty clusters keep their previous center
                centers[c] = members.mean(axis=0)
    return ClusterModel(
        algorithm="kmeans",
        params={"k": k},
        assignments=assignments,
        centers=centers,
        cost_history=costs,
    )


def _fit_dbscan(points: np.ndarray, eps: float, min_pts: int) -> ClusterModel:
    if eps <= 0:
        raise ClusteringError(f"eps must be positive, got {eps}")
    n = points.shape[0]
    dists = _pairwise_distances(points)
    within = dists <= eps
    neighbor_counts = within.sum(axis=1)  # includes the point itself
    core = neighbor_counts >= min_pts

    assignments = np.full(n, -1, dtype=np.intp)
    cluster_id = -1
    for i in range(n):
        if not core[i] or assignments[i] != -1:
            continue
        cluster_id += 1
        stack = [i]
        assignments[i] = cluster_id
        while stack:
            j = stack.pop()
            for nb in np.flatnonzero(within[j] & core):
                if assignments[nb] == -1:
                    assignments[nb] = cluster_id
                    stack.append(nb)
    # Border points join the cluster of their nearest core neighbor, which
    # keeps the partition independent of point order.
    core_idx = np.flatnonzero(core)
    if core_idx.size:
        for i in range(n):
            if core[i] or not within[i][core_idx].any():
                continue
            reachable = core_idx[within[i][core_idx]]
            nearest = reachable[np.argmin(dists[i][reachable])]
            assignments[i] = assignments[nearest]
    assignments = _relabel_by_first_occurrence(assignments)
    centers = _derived_centers(points, assignments)
    return ClusterModel(
        algorithm="dbscan",
        params={"eps": eps, "min_pts": min_pts},
        assignments=assignments,
        centers=centers,
    )


def _fit_agglomerative(points: np.ndarray, distance_threshold: float) -> ClusterModel:
    if distance_threshold <= 0:
        raise ClusteringError(f"distance_threshold must be positive, got {distance_threshold}")
    tree = linkage(points, method="ward")
    raw = fcluster(tree, t=distance_threshold, criterion="distance")
    assignments = _relabel_by_first_occurrence(np.asarray(raw, dtype=np.intp))
    centers = _derived_centers(points, assignments)
    return ClusterModel(
        algorithm="agglomerative",
        params={"distance_threshold": distance_threshold},
        assignments=assignments,
        centers=centers,
    )


def _relabel_by_first_occurrence(assignments: np.ndarray) -> np.ndarray:
    mapping: dict[int, int] = {}
    out = np.full_like(assignments, -1)
    for i, a in enumerate(assignments):
        if a == -1:
            continue
        if a not in mapping:
            mapping[a] = len(mapping)
        out[i] = mapping[a]
    return out


def _derived_centers(points: np.ndarray, assignments: np.ndarray) -> np.ndarray:
    """Per-cluster centroid, i.e. the k=1 k-means center of each cluster."""
    ids = sorted(set(assignments[assignments >= 0].tolist()))
    if not ids:
        return np.zeros((0, 2))
    return np.stack([points[assignments == c].mean(axis=0) for c in ids])


def fit_clusters(
    points: ReducedPoints | np.ndarray,
    algorithm: str,
    params: dict,
    rng_seed: int = 0,
) -> ClusterModel:
    """Fit a clustering; pure given (points, params, seed).

    An all-noise DBSCAN result is returned as a valid model with zero
    clusters; callers decide how to handle it.
    """
    pts = points.points if isinstance(points, ReducedPoints) else np.asarray(points, dtype=np.float64)
    if algorithm == "kmeans":
        k = int(params["k"])
        if k < 1:
            raise ClusteringError(f"k must be >= 1, got {k}")
        return _fit_kmeans(pts, k, np.random.default_rng(rng_seed))
    if algorithm == "dbscan":
        return _fit_dbscan(pts, float(params["eps"]), int(params.get("min_pts", DBSCAN_MIN_PTS)))
    if algorithm == "agglomerative":
        return _fit_agglomerative(pts, float(params["distance_threshold"]))
    raise ClusteringError(f"unknown clustering algorithm {algorithm!r}")


def cluster_quality(
    points: ReducedPoints | np.ndarray, model: ClusterModel, metric: str
) -> float:
    """Standard cluster-quality indices; noise points are excluded.

    silhouette: mean of (b-a)/max(a,b); singletons contribute 0.
    calinski_harabasz: between/within dispersion scaled by (N-C)/(C-1).
    davies_bouldin: mean over clusters of the worst (s_i+s_j)/d_ij ratio.
    """
    pts = points.points if isinstance(points, ReducedPoints) else np.asarray(points, dtype=np.float64)
    mask = model.assignments >= 0
    x = pts[mask]
    labels = model.assignments[mask]
    ids = sorted(set(labels.tolist()))
    if len(ids) < 2 or x.shape[0] < 2:
        raise UndefinedMetricError(
            f"{metric} undefined for {len(ids)} cluster(s) over {x.shape[0]} point(s)"
        )
    if metric == "silhouette":
        dists = _pairwise_distances(x)
        scores = np.zeros(x.shape[0])
        for i in range(x.shape[0]):
            same = labels == labels[i]
            n_same = same.sum()
            if n_same <= 1:
                continue  # singleton: s = 0
            a = dists[i][same].sum() / (n_same - 1)
            b = min(dists[i][labels == c].mean() for c in ids if c != labels[i])
            denom = max(a, b)
            scores[i] = (b - a) / denom if denom > 0 else 0.0
        return float(scores.mean())
    if metric == "calinski_harabasz":
        overall = x.mean(axis=0)
        within = 0.0
        between = 0.0
        for c in ids:
            members = x[labels == c]
            center = members.mean(axis=0)
            within += ((members - center) ** 2).sum()
            between += members.shape[0] * ((center - overall) ** 2).sum()
        if within == 0.0:
            return 1.0 if between == 0.0 else np.inf
        return float(between * (x.shape[0] - len(ids)) / (within * (len(ids) - 1)))
    if metric == "davies_bouldin":
        centers = np.stack([x[labels == c].mean(axis=0) for c in ids])
        spreads = np.array(
            [np.sqrt(((x[labels == c] - centers[i]) ** 2).sum(axis=1)).mean() for i, c in enumerate(ids)]
        )
        worst = np.zeros(len(ids))
        for i in range(len(ids)):
            ratios = []
            for j in range(len(ids)):
                if i == j:
                    continue
                gap = np.sqrt(((centers[i] - centers[j]) ** 2).sum())
                total = spreads[i] + spreads[j]
                if gap > 0:
                    ratios.append(total / gap)
                else:
                    ratios.append(np.inf if total > 0 else 0.0)
            worst[i] = max(ratios)
        return float(worst.mean())
    raise ClusteringError(f"unknown quality metric {metric!r}")


@dataclass
class SweepResult:
    algorithm: str
    grid: tuple
    per_metric: dict[str, float]  # metric -> mean of per-iteration best grid values
    final: float | int  # mean of the three, snapped to the grid
    iterations: int
    score_table: np.ndarray  # [iterations, len(grid), 3], NaN where undefined


def sweep_grid(algorithm: str) -> tuple:
    if algorithm == "kmeans":
        return KMEANS_GRID
    if algorithm == "dbscan":
        return DBSCAN_GRID
    if algorithm == "agglomerative":
        return AGGLOMERATIVE_GRID
    raise ClusteringError(f"unknown clustering algorithm {algorithm!r}")


def _params_for(algorithm: str, value) -> dict:
    if algorithm == "kmeans":
        return {"k": int(value)}
    if algorithm == "dbscan":
        return {"eps": float(value)}
    return {"distance_threshold": float(value)}


def sweep_optimize(
    points: ReducedPoints | np.ndarray,
    algorithm: str,
    rng_seed: int = 0,
    iterations: int = SWEEP_ITERATIONS,
) -> SweepResult:
    """Grid-sweep the algorithm's hyperparameter and pick the final value.

    For each seeded iteration every grid value is fitted and scored with all
    three metrics (silhouette and Calinski-Harabasz maximized, Davies-Bouldin
    minimized).  Per metric, the best grid value is averaged over iterations;
    the final parameter is the mean of the three per-metric values rounded to
    the nearest grid point, so downstream fits stay on-grid.
    """
    grid = sweep_grid(algorithm)
    table = np.full((iterations, len(grid), len(QUALITY_METRICS)), np.nan)
    seeds = np.random.SeedSequence(rng_seed).spawn(iterations)
    for it in range(iterations):
        seed_it = seeds[it].generate_state(1)[0]
        for gi, value in enumerate(grid):
            try:
                model = fit_clusters(points, algorithm, _params_for(algorithm, value), int(seed_it))
            except ClusteringError:
                continue
            for mi, metric in enumerate(QUALITY_METRICS):
                try:
                    table[it, gi, mi] = cluster_quality(points, model, metric)
                except UndefinedMetricError:
                    pass
    per_metric: dict[str, float] = {}
    for mi, metric in enumerate(QUALITY_METRICS):
        maximize = metric != "davies_bouldin"
        chosen: list[float] = []
        for it in range(iterations):
            scores = table[it, :, mi]
            valid = np.isfinite(scores) | (np.isinf(scores) & maximize)
            if not valid.any():
                continue
            masked = np.where(valid, scores, -np.inf if maximize else np.inf)
            best = int(np.argmax(masked)) if maximize else int(np.argmin(masked))
            chosen.append(float(grid[best]))
        if chosen:
            per_metric[metric] = float(np.mean(chosen))
    if len(per_metric) < len(QUALITY_METRICS):
        raise SweepFailedError(f"sweep failed for {algorithm!r}: no scorable grid value")
    final_raw = float(np.mean(list(per_metric.values())))
    final = min(grid, key=lambda g: (abs(float(g) - final_raw), float(g)))
    return SweepResult(
        algorithm=algorithm,
        grid=grid,
        per_metric=per_metric,
        final=final,
        iterations=iterations,
        score_table=table,
    )
