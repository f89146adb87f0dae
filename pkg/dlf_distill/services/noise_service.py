"""Inverse-gamma distillation of the teacher noise variances."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln, polygamma

from dlf_distill.core.errors import DistillError
from dlf_distill.core.logging import get_logger
from dlf_distill.core.numerics import SeededRng
from dlf_distill.models.artifacts import InverseGammaRecord

logger = get_logger(__name__)

NEWTON_MAX_ITER = 100
NEWTON_STEP_TOL = 1e-14
# largest move of log(alpha) per Newton iteration
NEWTON_MAX_STEP = 2.0
# shape of the fallback law for equal variances, relative sd about 1e-3
POINT_MASS_ALPHA = 1e6


class NoiseError(DistillError):
    """Base exception for noise distillation errors."""

    pass


class DegenerateSamplesError(NoiseError):
    """Too few samples, or all samples equal."""

    pass


class NonPositiveSampleError(NoiseError):
    """A variance sample is zero or negative."""

    pass


@dataclass(frozen=True)
class InverseGammaParams:
    """Shape ``alpha`` and scale ``beta`` of an inverse-gamma law."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise NoiseError(f"{name} must be positive and finite, got {value}")

    @property
    def mean(self) -> float:
        return self.beta / (self.alpha - 1.0) if self.alpha > 1.0 else math.inf

    def to_record(self) -> InverseGammaRecord:
        return InverseGammaRecord(alpha=self.alpha, beta=self.beta)

    @classmethod
    def from_record(cls, record: InverseGammaRecord) -> InverseGammaParams:
        return cls(alpha=record.alpha, beta=record.beta)


def _check_samples(samples: np.ndarray | list[float]) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size < 2:
        raise DegenerateSamplesError(f"need at least 2 samples, got {samples.size}")
    if np.any(~np.isfinite(samples)) or np.any(samples <= 0.0):
        raise NonPositiveSampleError("all samples must be positive and finite")
    if np.all(samples == samples[0]):
        raise DegenerateSamplesError("all samples are equal")
    return samples


def moment_match(mean: float, var: float) -> InverseGammaParams:
    """``alpha = mean^2 / var + 2``, ``beta = mean * (alpha - 1)``."""
    alpha = mean**2 / var + 2.0
    return InverseGammaParams(alpha=alpha, beta=mean * (alpha - 1.0))


def inverse_gamma_loglik(params: InverseGammaParams, samples: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    a, b = params.alpha, params.beta
    return float(
        np.sum(a * np.log(b) - gammaln(a) - (a + 1.0) * np.log(samples) - b / samples)
    )


def fit_inverse_gamma(samples: np.ndarray | list[float]) -> InverseGammaParams:
    """
    Maximum-likelihood inverse-gamma fit.

    The scale is profiled out (``beta = n alpha / sum(1/s)``) and Newton's
    method runs on ``log alpha`` for the remaining digamma equation, started
    from the moment-matched fit. The moment fit is returned instead if it
    happens to score higher.

    Raises:
        DegenerateSamplesError: If there are fewer than 2 samples or all are equal
        NonPositiveSampleError: If any sample is not positive
    """
    samples = _check_samples(samples)
    n = samples.size
    inv_total = float(np.sum(1.0 / samples))
    mean_log = float(np.mean(np.log(samples)))
    initial = moment_match(float(samples.mean()), float(samples.var()))

    log_alpha = math.log(initial.alpha)
    iterations = 0
    for iterations in range(1, NEWTON_MAX_ITER + 1):
        alpha = math.exp(log_alpha)
        score = math.log(n * alpha / inv_total) - float(digamma(alpha)) - mean_log
        slope = 1.0 - alpha * float(polygamma(1, alpha))
        step = float(np.clip(score / slope, -NEWTON_MAX_STEP, NEWTON_MAX_STEP))
        log_alpha -= step
        if abs(step) < NEWTON_STEP_TOL:
            break

    alpha = math.exp(log_alpha)
    fitted = InverseGammaParams(alpha=alpha, beta=n * alpha / inv_total)
    if inverse_gamma_loglik(fitted, samples) < inverse_gamma_loglik(initial, samples):
        fitted = initial
    logger.info(
        "Noise distribution fitted",
        alpha=fitted.alpha,
        beta=fitted.beta,
        iterations=iterations,
        samples=n,
    )
    return fitted


def distill_noise(samples: np.ndarray | list[float]) -> InverseGammaParams:
    """
    Inverse-gamma law for the teacher noise variances.

    Equal variances, such as members all clamped at the same floor, give a
    near point mass at their common value instead of a fit.

    Raises:
        NonPositiveSampleError: If any sample is not positive
    """
    try:
        return fit_inverse_gamma(samples)
    except DegenerateSamplesError as exc:
        values = np.asarray(samples, dtype=np.float64).ravel()
        if values.size == 0:
            raise
        if np.any(~np.isfinite(values)) or np.any(values <= 0.0):
            raise NonPositiveSampleError("all samples must be positive and finite") from exc
        center = float(values.mean())
        logger.warning(
            "Noise variances are degenerate, using a point mass",
            reason=str(exc),
            variance=center,
            samples=values.size,
        )
        return InverseGammaParams(
            alpha=POINT_MASS_ALPHA, beta=center * (POINT_MASS_ALPHA - 1.0)
        )


def sample_inverse_gamma(params: InverseGammaParams, count: int, rng: SeededRng) -> np.ndarray:
    """Draw ``count`` variances as reciprocals of gamma variates."""
    if count <= 0:
        return np.empty(0)
    return 1.0 / rng.gamma(params.alpha, 1.0 / params.beta, count)
