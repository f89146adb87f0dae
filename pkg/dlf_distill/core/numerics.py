"""Gaussian linear algebra and seeded sampling shared by every service.

All arrays are float64. Covariances handled here are dense or of the
low-rank-plus-jitter form ``Phi Phi^T + s2 I``; the latter is evaluated with
the Woodbury identity and the matrix determinant lemma so that the cost is
O(m q^2) instead of O(m^3).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from dlf_distill.core.errors import DimensionMismatchError, DistillError, InvalidShapeError

LOG_2PI = float(np.log(2.0 * np.pi))

# Cholesky pivots at or below this value are treated as singular
PD_TOLERANCE = 1e-12
SYMMETRY_TOLERANCE = 1e-10

RNG_ALGORITHM = "PCG64"


class NotPositiveDefiniteError(DistillError):
    """Matrix is not symmetric positive definite."""

    pass


class SeededRng:
    """Seeded generator with named child streams.

    Wraps ``numpy.random.Generator`` over PCG64. Child streams are derived from
    the parent seed and a stage name, so a pipeline stage is reproducible on
    its own regardless of how much randomness earlier stages consumed.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self._generator = np.random.Generator(np.random.PCG64(self.seed))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def spawn(self, name: str | int) -> SeededRng:
        """Return an independent stream keyed by ``(seed, name)``."""
        digest = hashlib.sha256(f"{self.seed}:{name}".encode()).digest()
        return SeededRng(int.from_bytes(digest[:8], "little"))

    def standard_normal(self, rows: int, cols: int) -> np.ndarray:
        return self._generator.standard_normal((rows, cols))

    def uniform(self, low: float, high: float, size: int | tuple[int, ...]) -> np.ndarray:
        return self._generator.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def integers(self, low: int, high: int, size: int | tuple[int, ...]) -> np.ndarray:
        return self._generator.integers(low, high, size)

    def gamma(self, shape: float, scale: float, size: int) -> np.ndarray:
        return self._generator.gamma(shape, scale, size)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, algorithm={self.algorithm!r})"


def sample_std_normal(rng: SeededRng, rows: int, cols: int) -> np.ndarray:
    """Draw a ``rows x cols`` matrix of i.i.d. standard normal entries."""
    if rows < 1 or cols < 1:
        raise InvalidShapeError(f"cannot sample a {rows}x{cols} matrix")
    return rng.standard_normal(rows, cols)


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor of a symmetric positive definite matrix."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if not np.allclose(a, a.T, rtol=0.0, atol=SYMMETRY_TOLERANCE * scale):
        raise NotPositiveDefiniteError("matrix is not symmetric")
    try:
        g = linalg.cholesky(a, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    if np.any(np.diag(g) ** 2 <= PD_TOLERANCE):
        raise NotPositiveDefiniteError("pivot below positive-definite tolerance")
    return g


def dense_logpdf(obs: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Multivariate normal log-density using a dense Cholesky factorization."""
    obs = np.asarray(obs, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if obs.shape != mean.shape or cov.shape != (obs.size, obs.size):
        raise DimensionMismatchError(
            f"obs {obs.shape}, mean {mean.shape}, cov {cov.shape} do not align"
        )
    g = cholesky(cov)
    white = linalg.solve_triangular(g, obs - mean, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(g))))
    return -0.5 * (obs.size * LOG_2PI + logdet + float(white @ white))


@dataclass(frozen=True, eq=False)
class LowRankGaussian:
    """``N(mean, loading loading^T + jitter I)``."""

    mean: np.ndarray
    loading: np.ndarray
    jitter: float
    _inner_chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        loading = np.asarray(self.loading, dtype=np.float64)
        if loading.ndim == 1 and loading.size == 0:
            loading = loading.reshape(mean.size, 0)
        if mean.ndim != 1 or loading.ndim != 2 or loading.shape[0] != mean.size:
            raise DimensionMismatchError(
                f"mean {mean.shape} and loading {loading.shape} do not align"
            )
        if not (self.jitter > 0.0 and np.isfinite(self.jitter)):
            raise NotPositiveDefiniteError(f"jitter must be positive and finite, got {self.jitter}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "loading", loading)
        inner = self.jitter * np.eye(self.rank) + loading.T @ loading
        object.__setattr__(self, "_inner_chol", cholesky(inner) if self.rank else inner)

    @property
    def dim(self) -> int:
        return int(self.mean.size)

    @property
    def rank(self) -> int:
        return int(self.loading.shape[1])

    def covariance(self) -> np.ndarray:
        return self.loading @ self.loading.T + self.jitter * np.eye(self.dim)

    def logdet(self) -> float:
        """``log det(Phi Phi^T + s2 I) = (m - q) log s2 + log det(s2 I_q + Phi^T Phi)``."""
        inner = 2.0 * float(np.sum(np.log(np.diag(self._inner_chol)))) if self.rank else 0.0
        return (self.dim - self.rank) * float(np.log(self.jitter)) + inner

    def quad_forms(self, residuals: np.ndarray) -> np.ndarray:
        """``r^T (Phi Phi^T + s2 I)^{-1} r`` for each row ``r`` of ``residuals``."""
        base = np.einsum("ij,ij->i", residuals, residuals)
        if self.rank == 0:
            return base / self.jitter
        projected = residuals @ self.loading
        solved = linalg.cho_solve((self._inner_chol, True), projected.T).T
        return (base - np.einsum("ij,ij->i", projected, solved)) / self.jitter

    def logpdf_rows(self, obs: np.ndarray) -> np.ndarray:
        """Log-density of every row of ``obs`` (shape ``n x m``)."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        if obs.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"observation length {obs.shape[1]} != mean length {self.dim}"
            )
        quad = self.quad_forms(obs - self.mean)
        return -0.5 * (self.dim * LOG_2PI + self.logdet() + quad)


def lowrank_logpdf(obs: np.ndarray, model: LowRankGaussian) -> float:
    """Log-density of one observation vector under a low-rank Gaussian."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 1 or obs.size != model.dim:
        raise DimensionMismatchError(f"observation shape {obs.shape} != ({model.dim},)")
    return float(model.logpdf_rows(obs[None, :])[0])


def lowrank_logdet(loading: np.ndarray, jitter: float) -> float:
    """Log-determinant of ``loading loading^T + jitter I`` via the determinant lemma."""
    loading = np.asarray(loading, dtype=np.float64)
    return LowRankGaussian(np.zeros(loading.shape[0]), loading, jitter).logdet()


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def inverse_softplus(y: np.ndarray | float) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))
