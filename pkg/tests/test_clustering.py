import numpy as np
import pytest

from argal.clustering import (
    AGGLOMERATIVE_GRID,
    DBSCAN_GRID,
    KMEANS_GRID,
    ClusteringError,
    ReducedPoints,
    SweepFailedError,
    UndefinedMetricError,
    cluster_quality,
    fit_clusters,
    load_reduced_points,
    reduce_2d,
    save_reduced_points,
    sweep_optimize,
)


def blobs(rng, centers, per=20, spread=0.3):
    points = []
    for cx, cy in centers:
        points.append(rng.normal(size=(per, 2)) * spread + np.array([cx, cy]))
    return np.vstack(points)


class TestReduce2d:
    def test_full_rank_2d_preserves_distances(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(12, 2))
        reduced = reduce_2d(x).points
        orig = np.linalg.norm(x[:, None] - x[None, :], axis=2)
        new = np.linalg.norm(reduced[:, None] - reduced[None, :], axis=2)
        np.testing.assert_allclose(orig, new, atol=1e-9)

    def test_planar_3d_reconstructs(self):
        rng = np.random.default_rng(1)
        coeff = rng.normal(size=(2, 3))
        latent = rng.normal(size=(15, 2))
        x = latent @ coeff  # rank-2 data in 3-D
        reduced = reduce_2d(x).points
        centered = x - x.mean(axis=0)
        # distances in the plane are preserved exactly
        orig = np.linalg.norm(centered[:, None] - centered[None, :], axis=2)
        new = np.linalg.norm(reduced[:, None] - reduced[None, :], axis=2)
        np.testing.assert_allclose(orig, new, atol=1e-9)

    def test_projection_variance_equals_eigenvalues(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(10, 5))
        reduced = reduce_2d(x).points
        centered = x - x.mean(axis=0)
        eigvals = np.sort(np.linalg.eigvalsh(centered.T @ centered))[::-1]
        np.testing.assert_allclose(
            (reduced**2).sum(axis=0), eigvals[:2], atol=1e-8
        )

    def test_sign_convention_deterministic(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(9, 4))
        a = reduce_2d(x).points
        b = reduce_2d(x.copy()).points
        np.testing.assert_array_equal(a, b)

    def test_zero_variance_falls_back_with_warning(self):
        x = np.ones((5, 3))
        with pytest.warns(UserWarning, match="zero-variance"):
            reduced = reduce_2d(x)
        np.testing.assert_array_equal(reduced.points, np.zeros((5, 2)))

    def test_preconditions(self):
        with pytest.raises(ClusteringError):
            reduce_2d(np.zeros((1, 4)))
        with pytest.raises(ClusteringError):
            reduce_2d(np.zeros((4, 1)))

    def test_external_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(7, 2)).astype("<f4")
        path = tmp_path / "points.ared"
        save_reduced_points(path, pts)
        first = path.read_bytes()
        loaded = load_reduced_points(path)
        np.testing.assert_array_equal(loaded, pts.astype(np.float64))
        save_reduced_points(tmp_path / "again.ared", loaded)
        assert (tmp_path / "again.ared").read_bytes() == first
        reduced = reduce_2d(rng.normal(size=(7, 5)), reducer="external", external_path=path)
        assert reduced.reducer == "external"
        np.testing.assert_array_equal(reduced.points, loaded)


class TestKmeans:
    def test_two_far_pairs(self):
        points = np.array([[0.0, 0], [0, 1], [10, 0], [10, 1]])
        model = fit_clusters(points, "kmeans", {"k": 2}, rng_seed=0)
        assert model.assignments[0] == model.assignments[1]
        assert model.assignments[2] == model.assignments[3]
        assert model.assignments[0] != model.assignments[2]

    def test_lloyd_cost_non_increasing(self):
        rng = np.random.default_rng(5)
        for trial in range(30):
            points = rng.normal(size=(40, 2)) * rng.uniform(0.5, 3)
            model = fit_clusters(points, "kmeans", {"k": int(rng.integers(2, 8))}, rng_seed=trial)
            costs = np.array(model.cost_history)
            assert (np.diff(costs) <= 1e-9).all()

    def test_seeded_reproducibility(self):
        rng = np.random.default_rng(6)
        points = rng.normal(size=(30, 2))
        a = fit_clusters(points, "kmeans", {"k": 4}, rng_seed=11)
        b = fit_clusters(points, "kmeans", {"k": 4}, rng_seed=11)
        np.testing.assert_array_equal(a.assignments, b.assignments)
        np.testing.assert_array_equal(a.centers, b.centers)

    def test_k_exceeds_n(self):
        with pytest.raises(ClusteringError, match="exceeds"):
            fit_clusters(np.zeros((3, 2)), "kmeans", {"k": 5}, rng_seed=0)


class TestDbscan:
    def test_all_noise_when_eps_tiny(self):
        rng = np.random.default_rng(7)
        points = rng.normal(size=(12, 2)) * 10
        model = fit_clusters(points, "dbscan", {"eps": 1e-6}, rng_seed=0)
        assert model.num_clusters == 0
        assert (model.assignments == -1).all()

    def test_two_dense_blobs(self):
        rng = np.random.default_rng(8)
        points = blobs(rng, [(0, 0), (10, 10)], per=15, spread=0.2)
        model = fit_clusters(points, "dbscan", {"eps": 1.0}, rng_seed=0)
        assert model.num_clusters == 2
        assert (model.assignments[:15] == model.assignments[0]).all()
        assert (model.assignments[15:] == model.assignments[15]).all()

    def test_order_independence_set_equality(self):
        rng = np.random.default_rng(9)
        points = blobs(rng, [(0, 0), (6, 6), (12, 0)], per=12, spread=0.4)
        model = fit_clusters(points, "dbscan", {"eps": 1.5}, rng_seed=0)
        perm = rng.permutation(len(points))
        permuted = fit_clusters(points[perm], "dbscan", {"eps": 1.5}, rng_seed=0)

        def partition(assignments, index):
            clusters = {}
            for pos, a in enumerate(assignments):
                clusters.setdefault(a, set()).add(index[pos])
            return {frozenset(v) for k, v in clusters.items() if k != -1}, {
                index[pos] for pos, a in enumerate(assignments) if a == -1
            }

        base_clusters, base_noise = partition(model.assignments, list(range(len(points))))
        perm_clusters, perm_noise = partition(permuted.assignments, list(perm))
        assert base_clusters == perm_clusters
        assert base_noise == perm_noise

    def test_min_pts_default_is_5(self):
        points = np.array([[0.0, 0], [0, 0.1], [0.1, 0], [5, 5]])
        model = fit_clusters(points, "dbscan", {"eps": 0.5}, rng_seed=0)
        # only 3 mutual neighbors: below the default min_pts of 5 -> noise
        assert model.num_clusters == 0


class TestAgglomerative:
    def test_single_cluster_above_max_distance(self):
        points = np.array([[0.0, 0], [0, 1], [1, 0]])
        model = fit_clusters(points, "agglomerative", {"distance_threshold": 100.0}, rng_seed=0)
        assert model.num_clusters == 1

    def test_separated_blobs(self):
        rng = np.random.default_rng(10)
        points = blobs(rng, [(0, 0), (50, 50)], per=10, spread=0.3)
        model = fit_clusters(points, "agglomerative", {"distance_threshold": 10.0}, rng_seed=0)
        assert model.num_clusters == 2

    def test_centers_are_centroids(self):
        rng = np.random.default_rng(11)
        points = blobs(rng, [(0, 0), (50, 50)], per=8, spread=0.2)
        model = fit_clusters(points, "agglomerative", {"distance_threshold": 10.0}, rng_seed=0)
        for c in range(model.num_clusters):
            members = points[model.assignments == c]
            np.testing.assert_allclose(model.centers[c], members.mean(axis=0), atol=1e-12)


class TestClusterQuality:
    def rect_model(self):
        points = np.array([[0.0, 0], [0, 1], [10, 0], [10, 1]])
        model = fit_clusters(points, "kmeans", {"k": 2}, rng_seed=0)
        return points, model

    def test_silhouette_hand_value(self):
        points, model = self.rect_model()
        # hand: a = 1; b = (10 + sqrt(101))/2 for every point
        b = (10 + np.sqrt(101)) / 2
        expected = (b - 1) / b
        assert cluster_quality(points, model, "silhouette") == pytest.approx(expected, abs=1e-9)

    def test_davies_bouldin_hand_value(self):
        points, model = self.rect_model()
        # each cluster: centroid (x, 0.5), spread = 0.5; centroid gap = 10
        expected = (0.5 + 0.5) / 10
        assert cluster_quality(points, model, "davies_bouldin") == pytest.approx(expected, abs=1e-9)

    def test_calinski_harabasz_hand_value(self):
        points, model = self.rect_model()
        # within = 4 * 0.25 = 1; between = 4 * 25 = 100; (N-C)/(C-1) = 2
        assert cluster_quality(points, model, "calinski_harabasz") == pytest.approx(200.0, abs=1e-9)

    def test_single_cluster_undefined(self):
        points = np.array([[0.0, 0], [1, 1], [2, 2]])
        model = fit_clusters(points, "agglomerative", {"distance_threshold": 100.0}, rng_seed=0)
        for metric in ("silhouette", "calinski_harabasz", "davies_bouldin"):
            with pytest.raises(UndefinedMetricError):
                cluster_quality(points, model, metric)

    def test_bounds(self):
        rng = np.random.default_rng(12)
        for trial in range(20):
            points = rng.normal(size=(20, 2))
            model = fit_clusters(points, "kmeans", {"k": int(rng.integers(2, 6))}, rng_seed=trial)
            sil = cluster_quality(points, model, "silhouette")
            ch = cluster_quality(points, model, "calinski_harabasz")
            db = cluster_quality(points, model, "davies_bouldin")
            assert -1.0 <= sil <= 1.0
            assert ch > 0
            assert db >= 0

    def test_noise_excluded(self):
        rng = np.random.default_rng(13)
        points = np.vstack([blobs(rng, [(0, 0), (10, 10)], per=10, spread=0.2), [[100.0, 100.0]]])
        model = fit_clusters(points, "dbscan", {"eps": 1.0}, rng_seed=0)
        assert model.num_clusters == 2
        assert (model.assignments == -1).sum() == 1
        sil = cluster_quality(points, model, "silhouette")
        assert sil > 0.9  # the far noise point does not drag the score down

    def test_exhaustive_tiny_silhouette(self):
        # independent brute-force silhouette on a random 6-point instance
        rng = np.random.default_rng(14)
        points = rng.normal(size=(6, 2)) * 2
        model = fit_clusters(points, "kmeans", {"k": 3}, rng_seed=2)
        labels = model.assignments
        expected = []
        for i in range(6):
            same = [j for j in range(6) if labels[j] == labels[i] and j != i]
            if not same:
                expected.append(0.0)
                continue
            a = np.mean([np.linalg.norm(points[i] - points[j]) for j in same])
            bs = []
            for c in set(labels.tolist()):
                if c == labels[i]:
                    continue
                others = [j for j in range(6) if labels[j] == c]
                bs.append(np.mean([np.linalg.norm(points[i] - points[j]) for j in others]))
            b = min(bs)
            expected.append((b - a) / max(a, b))
        assert cluster_quality(points, model, "silhouette") == pytest.approx(
            np.mean(expected), abs=1e-9
        )


class TestSweep:
    def test_grids_match_protocol(self):
        assert KMEANS_GRID == tuple(range(2, 17))
        assert DBSCAN_GRID[0] == pytest.approx(0.10)
        assert DBSCAN_GRID[-1] == pytest.approx(0.51)
        assert len(DBSCAN_GRID) == 42
        assert AGGLOMERATIVE_GRID[0] == 10 and AGGLOMERATIVE_GRID[-1] == 150
        assert all(b - a == 5 for a, b in zip(AGGLOMERATIVE_GRID, AGGLOMERATIVE_GRID[1:]))

    def test_three_blobs_find_k3(self):
        rng = np.random.default_rng(15)
        points = blobs(rng, [(0, 0), (8, 0), (4, 7)], per=30, spread=0.45)
        result = sweep_optimize(points, "kmeans", rng_seed=0)
        assert result.final == 3
        assert all(abs(v - 3) < 0.75 for v in result.per_metric.values())

    def test_agglomerative_deterministic_iterations(self):
        rng = np.random.default_rng(16)
        points = blobs(rng, [(0, 0), (40, 40)], per=15, spread=1.0)
        result = sweep_optimize(points, "agglomerative", rng_seed=0, iterations=5)
        # per-iteration scores identical for a deterministic algorithm
        for gi in range(result.score_table.shape[1]):
            column = result.score_table[:, gi, :]
            for mi in range(3):
                vals = column[:, mi]
                assert np.all(vals == vals[0]) or np.all(np.isnan(vals))

    def test_final_on_grid(self):
        rng = np.random.default_rng(17)
        points = blobs(rng, [(0, 0), (6, 6)], per=20, spread=0.5)
        result = sweep_optimize(points, "kmeans", rng_seed=1, iterations=3)
        assert result.final in KMEANS_GRID

    def test_sweep_failed_when_all_noise(self):
        rng = np.random.default_rng(18)
        points = rng.normal(size=(30, 2)) * 1000  # every eps in grid -> all noise
        with pytest.raises(SweepFailedError, match="dbscan"):
            sweep_optimize(points, "dbscan", rng_seed=0, iterations=2)

    def test_dbscan_sweep_on_scaled_blobs(self):
        rng = np.random.default_rng(19)
        points = blobs(rng, [(0, 0), (1.5, 1.5)], per=25, spread=0.05)
        result = sweep_optimize(points, "dbscan", rng_seed=0, iterations=2)
        assert DBSCAN_GRID[0] <= result.final <= DBSCAN_GRID[-1]
