"""Cosine-diversity and MMD estimator tests, checked against brute-force
pairwise loops and analytic kernel limits."""

import math

import numpy as np
import pytest

from slbl.diversity import median_bandwidth, mmd_squared, within_class_cosine


def cosine_oracle(rows):
    """Brute-force mean/population-std of all unordered pairwise cosines."""
    vals = []
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            a, b = np.asarray(rows[i], float), np.asarray(rows[j], float)
            vals.append(float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b))))
    vals = np.asarray(vals)
    return vals.mean(), vals.std()


class TestWithinClassCosine:
    def test_identical_rows_are_maximally_similar(self):
        X = np.tile([1.0, 2.0, -1.0], (4, 1))
        rep = within_class_cosine(X, np.zeros(4, dtype=int))
        np.testing.assert_allclose(rep.per_class_cosine_mean, [1.0], atol=1e-12)
        np.testing.assert_allclose(rep.per_class_cosine_std, [0.0], atol=1e-12)

    def test_orthogonal_pair_scores_zero(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        rep = within_class_cosine(X, [0, 0])
        assert rep.overall_mean == pytest.approx(0.0, abs=1e-15)

    def test_matches_bruteforce_oracle(self):
        X = np.array(
            [
                [1.0, 0.5, 0.0],
                [0.2, 1.0, -0.3],
                [-0.4, 0.1, 0.9],
                [2.0, 2.0, 2.0],
                [1.0, -1.0, 0.5],
                [0.3, 0.3, -0.2],
            ]
        )
        y = np.array([0, 0, 0, 1, 1, 1])
        rep = within_class_cosine(X, y)
        for ci, c in enumerate(rep.class_ids):
            mean, std = cosine_oracle(X[y == c])
            assert rep.per_class_cosine_mean[ci] == pytest.approx(mean, abs=1e-12)
            assert rep.per_class_cosine_std[ci] == pytest.approx(std, abs=1e-12)
        means = [cosine_oracle(X[y == c])[0] for c in (0, 1)]
        assert rep.overall_mean == pytest.approx(np.mean(means), abs=1e-12)
        assert rep.overall_std == pytest.approx(np.std(means), abs=1e-12)

    def test_singleton_class_skipped_with_warning(self):
        X = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
        y = np.array([0, 0, 1])
        with pytest.warns(UserWarning, match="fewer than 2"):
            rep = within_class_cosine(X, y)
        np.testing.assert_array_equal(rep.class_ids, [0])

    def test_zero_norm_row_rejected(self):
        with pytest.raises(ValueError):
            within_class_cosine([[0.0, 0.0], [1.0, 0.0]], [0, 0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(61)
        X = rng.normal(0, 1, (12, 5))
        y = rng.integers(0, 3, 12)
        scaled = X * rng.uniform(0.1, 10.0, size=(12, 1))
        a = within_class_cosine(X, y)
        b = within_class_cosine(scaled, y)
        np.testing.assert_allclose(
            a.per_class_cosine_mean, b.per_class_cosine_mean, atol=1e-12
        )
        np.testing.assert_allclose(
            a.per_class_cosine_std, b.per_class_cosine_std, atol=1e-12
        )


class TestMmdSquared:
    def test_identical_samples_score_zero(self):
        rng = np.random.default_rng(67)
        X = rng.normal(0, 1, (20, 4))
        assert mmd_squared(X, X.copy(), bandwidth=1.0) <= 1e-12

    def test_single_point_pair_analytic(self):
        x = np.array([[1.0, 2.0]])
        y = np.array([[3.0, -1.0]])
        sigma = 1.7
        d2 = float(((x - y) ** 2).sum())
        expected = 2.0 - 2.0 * math.exp(-d2 / (2 * sigma * sigma))
        assert mmd_squared(x, y, bandwidth=sigma) == pytest.approx(expected, abs=1e-12)

    def test_vanishing_bandwidth_limit(self):
        """As the kernel narrows, only self-pairs survive: the estimator
        tends to 1/|X| + 1/|Y| when all points are distinct."""
        rng = np.random.default_rng(71)
        X = rng.normal(0, 1, (7, 3))
        Y = rng.normal(5, 1, (11, 3))
        value = mmd_squared(X, Y, bandwidth=1e-6)
        assert value == pytest.approx(1 / 7 + 1 / 11, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(73)
        X = rng.normal(0, 1, (9, 6))
        Y = rng.normal(0.3, 1.2, (14, 6))
        assert mmd_squared(X, Y) == pytest.approx(mmd_squared(Y, X), abs=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(79)
        X = rng.normal(0, 1, (10, 4))
        Y = rng.normal(1, 1, (12, 4))
        shift = rng.normal(0, 5, 4)
        a = mmd_squared(X, Y, bandwidth=2.0)
        b = mmd_squared(X + shift, Y + shift, bandwidth=2.0)
        assert a == pytest.approx(b, abs=1e-9)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            mmd_squared(np.zeros((2, 3)), np.zeros((2, 4)))

    def test_non_positive_bandwidth_rejected(self):
        with pytest.raises(ValueError):
            mmd_squared(np.ones((2, 2)), np.zeros((2, 2)), bandwidth=0.0)

    def test_auto_bandwidth_is_median_distance(self):
        rng = np.random.default_rng(83)
        X = rng.normal(0, 1, (6, 2))
        Y = rng.normal(2, 1, (5, 2))
        Z = np.concatenate([X, Y])
        dists = [
            np.linalg.norm(Z[i] - Z[j])
            for i in range(len(Z))
            for j in range(i + 1, len(Z))
        ]
        assert median_bandwidth(X, Y) == pytest.approx(np.median(dists), abs=1e-9)
        assert mmd_squared(X, Y) == pytest.approx(
            mmd_squared(X, Y, bandwidth=float(np.median(dists))), abs=1e-12
        )

    def test_result_clipped_at_zero(self):
        X = np.zeros((3, 2))
        assert mmd_squared(X, X, bandwidth=0.5) == 0.0
