"""CRF inference against exhaustive path enumeration.

The oracle below scores every one of the L^T paths directly from the score
tables, independently of the forward/backward implementation.
"""

import itertools

import numpy as np
import pytest

from argal.crf import (
    CrfLayer,
    batch_nll_and_crf_gradients,
    batch_viterbi,
    crf_log_partition,
    crf_marginals,
    crf_viterbi,
    nll_and_crf_gradients,
    path_score,
)


def brute_scores(emissions, crf):
    """Independent path scorer: dict path -> score."""
    T, L = emissions.shape
    scores = {}
    for path in itertools.product(range(L), repeat=T):
        s = crf.start_scores[path[0]] + crf.end_scores[path[-1]]
        for t, label in enumerate(path):
            s += emissions[t, label]
        for a, b in zip(path, path[1:]):
            s += crf.transitions[a, b]
        scores[path] = float(s)
    return scores


def brute_log_partition(scores):
    vals = np.array(list(scores.values()))
    m = vals.max()
    return float(m + np.log(np.exp(vals - m).sum()))


def brute_marginals(scores, T, L):
    logz = brute_log_partition(scores)
    marg = np.zeros((T, L))
    for path, s in scores.items():
        w = np.exp(s - logz)
        for t, label in enumerate(path):
            marg[t, label] += w
    return marg


def random_instance(rng, T, L=3, scale=1.5):
    emissions = rng.normal(size=(T, L)) * scale
    crf = CrfLayer(
        transitions=rng.normal(size=(L, L)) * scale,
        start_scores=rng.normal(size=L) * scale,
        end_scores=rng.normal(size=L) * scale,
    )
    return emissions, crf


class TestLogPartition:
    def test_t1_all_zero(self):
        crf = CrfLayer.zeros(2)
        assert crf_log_partition(np.zeros((1, 2)), crf) == pytest.approx(np.log(2), abs=1e-12)

    def test_t2_l3_all_zero(self):
        crf = CrfLayer.zeros(3)
        assert crf_log_partition(np.zeros((2, 3)), crf) == pytest.approx(np.log(9), abs=1e-12)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            T = int(rng.integers(1, 5))
            emissions, crf = random_instance(rng, T)
            scores = brute_scores(emissions, crf)
            assert crf_log_partition(emissions, crf) == pytest.approx(
                brute_log_partition(scores), abs=1e-8
            )

    def test_overflow_safe(self):
        rng = np.random.default_rng(1)
        emissions, crf = random_instance(rng, 4, scale=500.0)
        value = crf_log_partition(emissions, crf)
        assert np.isfinite(value)

    def test_partition_bounds_any_path(self):
        rng = np.random.default_rng(2)
        emissions, crf = random_instance(rng, 4)
        logz = crf_log_partition(emissions, crf)
        for path, s in brute_scores(emissions, crf).items():
            assert logz >= s
            assert 0.0 < np.exp(s - logz) <= 1.0


class TestViterbi:
    def test_emission_dominated(self):
        crf = CrfLayer.zeros(3)
        emissions = np.array([[5.0, 0, 0], [0, 5.0, 0]])
        path, _ = crf_viterbi(emissions, crf)
        assert path == [0, 1]  # PRO, CON

    def test_tie_breaks_to_lower_index(self):
        crf = CrfLayer.zeros(3)
        path, score = crf_viterbi(np.zeros((3, 3)), crf)
        assert path == [0, 0, 0] and score == 0.0

    def test_matches_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            T = int(rng.integers(1, 6))
            emissions, crf = random_instance(rng, T)
            scores = brute_scores(emissions, crf)
            best = max(scores, key=scores.get)
            path, score = crf_viterbi(emissions, crf)
            assert tuple(path) == best
            assert score == pytest.approx(scores[best], abs=1e-9)


class TestMarginals:
    def test_all_zero_uniform(self):
        crf = CrfLayer.zeros(3)
        np.testing.assert_allclose(crf_marginals(np.zeros((4, 3)), crf), 1.0 / 3, atol=1e-12)

    def test_t1_softmax(self):
        crf = CrfLayer.zeros(3)
        emissions = np.array([[1.0, 2.0, -1.0]])
        expected = np.exp(emissions[0]) / np.exp(emissions[0]).sum()
        np.testing.assert_allclose(crf_marginals(emissions, crf)[0], expected, atol=1e-12)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            T = int(rng.integers(1, 5))
            emissions, crf = random_instance(rng, T)
            expected = brute_marginals(brute_scores(emissions, crf), T, 3)
            np.testing.assert_allclose(crf_marginals(emissions, crf), expected, atol=1e-8)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        emissions, crf = random_instance(rng, 6)
        np.testing.assert_allclose(crf_marginals(emissions, crf).sum(axis=1), 1.0, atol=1e-9)


class TestCrfGradients:
    def test_nll_matches_enumeration(self):
        rng = np.random.default_rng(6)
        emissions, crf = random_instance(rng, 4)
        labels = np.array([0, 2, 1, 1])
        scores = brute_scores(emissions, crf)
        expected = brute_log_partition(scores) - scores[tuple(labels)]
        nll, _ = nll_and_crf_gradients(emissions, crf, labels)
        assert nll == pytest.approx(expected, abs=1e-9)

    def test_emission_gradient_fd(self):
        rng = np.random.default_rng(7)
        emissions, crf = random_instance(rng, 3)
        labels = np.array([2, 0, 1])
        _, grads = nll_and_crf_gradients(emissions, crf, labels)
        h = 1e-6
        for t in range(3):
            for l in range(3):
                bumped = emissions.copy()
                bumped[t, l] += h
                up, _ = nll_and_crf_gradients(bumped, crf, labels)
                bumped[t, l] -= 2 * h
                down, _ = nll_and_crf_gradients(bumped, crf, labels)
                fd = (up - down) / (2 * h)
                assert grads.d_emissions[t, l] == pytest.approx(fd, abs=1e-6)

    def test_table_gradients_fd(self):
        rng = np.random.default_rng(8)
        emissions, crf = random_instance(rng, 4)
        labels = np.array([1, 1, 0, 2])
        _, grads = nll_and_crf_gradients(emissions, crf, labels)
        h = 1e-6

        def nll_at(crf2):
            value, _ = nll_and_crf_gradients(emissions, crf2, labels)
            return value

        for table, grad in (
            ("transitions", grads.d_transitions),
            ("start_scores", grads.d_start),
            ("end_scores", grads.d_end),
        ):
            arr = getattr(crf, table)
            flat = arr.ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                up = nll_at(crf)
                flat[idx] = orig - h
                down = nll_at(crf)
                flat[idx] = orig
                assert grad.ravel()[idx] == pytest.approx((up - down) / (2 * h), abs=1e-6)


class TestBatchOps:
    def test_batch_matches_single(self):
        rng = np.random.default_rng(9)
        T, B = 5, 7
        crf = CrfLayer(rng.normal(size=(3, 3)), rng.normal(size=3), rng.normal(size=3))
        emissions = rng.normal(size=(B, T, 3))
        labels = rng.integers(0, 3, size=(B, T))
        nll, grads = batch_nll_and_crf_gradients(emissions, crf, labels)
        trans_sum = np.zeros((3, 3))
        start_sum = np.zeros(3)
        end_sum = np.zeros(3)
        for b in range(B):
            nll_b, g = nll_and_crf_gradients(emissions[b], crf, labels[b])
            assert nll[b] == pytest.approx(nll_b, abs=1e-10)
            np.testing.assert_allclose(grads.d_emissions[b], g.d_emissions, atol=1e-10)
            trans_sum += g.d_transitions
            start_sum += g.d_start
            end_sum += g.d_end
        np.testing.assert_allclose(grads.d_transitions, trans_sum, atol=1e-9)
        np.testing.assert_allclose(grads.d_start, start_sum, atol=1e-10)
        np.testing.assert_allclose(grads.d_end, end_sum, atol=1e-10)

    def test_batch_viterbi_matches_single(self):
        rng = np.random.default_rng(10)
        crf = CrfLayer(rng.normal(size=(3, 3)), rng.normal(size=3), rng.normal(size=3))
        emissions = rng.normal(size=(6, 4, 3))
        paths = batch_viterbi(emissions, crf)
        for b in range(6):
            single, _ = crf_viterbi(emissions[b], crf)
            assert list(paths[b]) == single

    def test_path_score_direct(self):
        crf = CrfLayer(
            transitions=np.arange(9, dtype=float).reshape(3, 3),
            start_scores=np.array([1.0, 0.0, 0.0]),
            end_scores=np.array([0.0, 0.0, 2.0]),
        )
        emissions = np.ones((3, 3))
        # start(0)=1 + em 3 + trans(0,1)=1 + trans(1,2)=5 + end(2)=2
        assert path_score(emissions, crf, np.array([0, 1, 2])) == pytest.approx(12.0)
