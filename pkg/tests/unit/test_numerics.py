"""Unit tests for Gaussian linear algebra and seeded sampling."""

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from dlf_distill.core.errors import DimensionMismatchError, InvalidShapeError
from dlf_distill.core.numerics import (
    LowRankGaussian,
    NotPositiveDefiniteError,
    SeededRng,
    cholesky,
    dense_logpdf,
    inverse_softplus,
    lowrank_logdet,
    lowrank_logpdf,
    sample_std_normal,
    softplus,
)


class TestSeededRng:
    """Test reproducible random streams."""

    def test_same_seed_same_draws(self) -> None:
        """Test that two generators with one seed agree."""
        a = SeededRng(7).standard_normal(3, 4)
        b = SeededRng(7).standard_normal(3, 4)

        np.testing.assert_array_equal(a, b)

    def test_spawn_is_deterministic_and_independent(self) -> None:
        """Test that named child streams depend only on seed and name."""
        parent = SeededRng(7)
        parent.standard_normal(10, 10)

        first = parent.spawn("em").standard_normal(2, 2)
        again = SeededRng(7).spawn("em").standard_normal(2, 2)
        other = SeededRng(7).spawn("design").standard_normal(2, 2)

        np.testing.assert_array_equal(first, again)
        assert not np.allclose(first, other)

    def test_sample_std_normal_rejects_empty_shape(self, rng: SeededRng) -> None:
        """Test that a zero-sized request is refused."""
        with pytest.raises(InvalidShapeError):
            sample_std_normal(rng, 0, 3)


class TestCholesky:
    """Test the checked Cholesky factorization."""

    def test_reconstructs_matrix(self, rng: SeededRng) -> None:
        """Test that G G^T equals the input."""
        a = rng.standard_normal(4, 4)
        spd = a @ a.T + 4.0 * np.eye(4)

        g = cholesky(spd)

        np.testing.assert_allclose(g @ g.T, spd, atol=1e-12)
        np.testing.assert_array_equal(g, np.tril(g))

    def test_rejects_asymmetric(self) -> None:
        """Test that an asymmetric matrix is refused."""
        with pytest.raises(NotPositiveDefiniteError):
            cholesky(np.array([[2.0, 1.0], [0.0, 2.0]]))

    def test_rejects_indefinite(self) -> None:
        """Test that an indefinite matrix is refused."""
        with pytest.raises(NotPositiveDefiniteError):
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_rejects_non_square(self) -> None:
        """Test that a non-square matrix is refused."""
        with pytest.raises(DimensionMismatchError):
            cholesky(np.ones((2, 3)))


class TestGaussianDensities:
    """Test dense and low-rank Gaussian log-densities."""

    def test_dense_logpdf_matches_scipy(self, rng: SeededRng) -> None:
        """Test the dense density against scipy."""
        a = rng.standard_normal(5, 5)
        cov = a @ a.T + np.eye(5)
        mean = rng.standard_normal(1, 5)[0]
        obs = rng.standard_normal(1, 5)[0]

        expected = multivariate_normal(mean, cov).logpdf(obs)

        assert dense_logpdf(obs, mean, cov) == pytest.approx(expected, abs=1e-10)

    def test_woodbury_matches_dense(self) -> None:
        """Test low-rank density and log-det against dense evaluation on random instances."""
        rng = SeededRng(11)
        for _ in range(100):
            m = int(rng.integers(1, 9, 1)[0])
            q = int(rng.integers(1, m + 1, 1)[0])
            loading = rng.standard_normal(m, q)
            jitter = float(rng.uniform(0.05, 2.0, 1)[0])
            mean = rng.standard_normal(1, m)[0]
            obs = rng.standard_normal(1, m)[0]
            cov = loading @ loading.T + jitter * np.eye(m)

            law = LowRankGaussian(mean, loading, jitter)

            assert lowrank_logpdf(obs, law) == pytest.approx(
                dense_logpdf(obs, mean, cov), abs=1e-9
            )
            assert lowrank_logdet(loading, jitter) == pytest.approx(
                np.linalg.slogdet(cov)[1], abs=1e-9
            )

    def test_rank_zero_is_isotropic(self) -> None:
        """Test that an empty loading gives N(mean, jitter I)."""
        law = LowRankGaussian(np.zeros(3), np.zeros((3, 0)), 0.5)
        obs = np.array([0.1, -0.2, 0.3])

        expected = multivariate_normal(np.zeros(3), 0.5 * np.eye(3)).logpdf(obs)

        assert lowrank_logpdf(obs, law) == pytest.approx(expected, abs=1e-12)

    def test_logpdf_rows_matches_single_rows(self, rng: SeededRng) -> None:
        """Test that batched rows agree with one-at-a-time evaluation."""
        law = LowRankGaussian(np.zeros(4), rng.standard_normal(4, 2), 0.3)
        obs = rng.standard_normal(6, 4)

        batched = law.logpdf_rows(obs)

        for row, value in zip(obs, batched, strict=True):
            assert value == pytest.approx(lowrank_logpdf(row, law), abs=1e-12)

    def test_rejects_nonpositive_jitter(self) -> None:
        """Test that the jitter must be positive."""
        with pytest.raises(NotPositiveDefiniteError):
            LowRankGaussian(np.zeros(2), np.ones((2, 1)), 0.0)

    def test_rejects_misaligned_observation(self) -> None:
        """Test that an observation of the wrong length is refused."""
        law = LowRankGaussian(np.zeros(3), np.ones((3, 1)), 1.0)

        with pytest.raises(DimensionMismatchError):
            lowrank_logpdf(np.zeros(2), law)


class TestSoftplus:
    """Test the positivity transform."""

    def test_inverse_round_trip(self) -> None:
        """Test that inverse_softplus undoes softplus."""
        values = np.array([1e-3, 0.5, 1.0, 7.0])

        np.testing.assert_allclose(softplus(inverse_softplus(values)), values, rtol=1e-12)

    def test_large_inputs_do_not_overflow(self) -> None:
        """Test that softplus stays finite for large arguments."""
        assert softplus(np.array([800.0]))[0] == pytest.approx(800.0)
