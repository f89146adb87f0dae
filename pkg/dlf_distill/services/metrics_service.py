"""Scoring rules, calibration, and OOD statistics.

Regression scores take a ``PredictiveMixture``: ``N`` test points, each an
equal-weight mixture of ``S`` Gaussians. Classification scores take ``N x c``
probability rows. Natural logarithms throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import entr, logsumexp, ndtr
from scipy.stats import norm

from dlf_distill.core.errors import DimensionMismatchError, DistillError, EmptyDataError
from dlf_distill.core.numerics import LOG_2PI
from dlf_distill.models.report import ReliabilityBin

SIMPLEX_TOLERANCE = 1e-8
COVERAGE_LEVEL = 0.95
BISECTION_TOLERANCE = 1e-10
BISECTION_MAX_ITER = 200
MI_ZERO_TOLERANCE = 1e-12


class MetricsError(DistillError):
    """Base exception for metric evaluation errors."""

    pass


class NonPositiveVarianceError(MetricsError):
    """A mixture component has a non-positive variance."""

    pass


class InvalidSimplexError(MetricsError):
    """A probability row is negative or does not sum to one."""

    pass


@dataclass(frozen=True, eq=False)
class PredictiveMixture:
    """Equal-weight Gaussian mixtures, one row of ``S`` components per point."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        variances = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if means.shape != variances.shape:
            raise DimensionMismatchError(
                f"means {means.shape} and variances {variances.shape} differ"
            )
        if means.shape[1] < 1:
            raise EmptyDataError("a mixture needs at least one component")
        if not np.all(variances > 0.0):
            raise NonPositiveVarianceError("mixture variances must be positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_points(self) -> int:
        return int(self.means.shape[0])

    @property
    def components(self) -> int:
        return int(self.means.shape[1])

    def mean(self) -> np.ndarray:
        return self.means.mean(axis=1)

    def cdf(self, values: np.ndarray) -> np.ndarray:
        z = (np.asarray(values)[:, None] - self.means) / np.sqrt(self.variances)
        return ndtr(z).mean(axis=1)


def _targets_for(mixture: PredictiveMixture, targets: np.ndarray) -> np.ndarray:
    targets = np.atleast_1d(np.asarray(targets, dtype=np.float64))
    if targets.size == 0:
        raise EmptyDataError("no targets")
    if targets.shape != (mixture.n_points,):
        raise DimensionMismatchError(
            f"{targets.size} targets for a mixture over {mixture.n_points} points"
        )
    return targets


def rmse(means: np.ndarray, targets: np.ndarray) -> float:
    """Root mean squared error of point predictions."""
    means = np.asarray(means, dtype=np.float64).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if targets.size == 0:
        raise EmptyDataError("no targets")
    if means.shape != targets.shape:
        raise DimensionMismatchError(f"{means.size} predictions for {targets.size} targets")
    return float(np.sqrt(np.mean((means - targets) ** 2)))


def nll_regression(mixture: PredictiveMixture, targets: np.ndarray) -> float:
    """Mean negative log mixture density at the targets."""
    targets = _targets_for(mixture, targets)
    resid = targets[:, None] - mixture.means
    log_comp = -0.5 * (LOG_2PI + np.log(mixture.variances) + resid**2 / mixture.variances)
    log_density = logsumexp(log_comp, axis=1) - np.log(mixture.components)
    return -float(np.mean(log_density))


def _crps_kernel(mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    """``E|X|`` for ``X ~ N(mu, var)``."""
    sigma = np.sqrt(var)
    z = mu / sigma
    return 2.0 * sigma * norm.pdf(z) + mu * (2.0 * ndtr(z) - 1.0)


def crps_mixture(mixture: PredictiveMixture, targets: np.ndarray) -> np.ndarray:
    """
    Per-point CRPS of each mixture, in closed form.

    ``CRPS = E|X - y| - 0.5 E|X - X'|`` with both expectations summed over
    Gaussian component pairs.
    """
    targets = _targets_for(mixture, targets)
    first = _crps_kernel(targets[:, None] - mixture.means, mixture.variances).mean(axis=1)
    pair_mu = mixture.means[:, :, None] - mixture.means[:, None, :]
    pair_var = mixture.variances[:, :, None] + mixture.variances[:, None, :]
    second = _crps_kernel(pair_mu, pair_var).mean(axis=(1, 2))
    return np.maximum(first - 0.5 * second, 0.0)


def central_interval(
    mixture: PredictiveMixture, level: float = COVERAGE_LEVEL
) -> tuple[np.ndarray, np.ndarray]:
    """Equal-tailed interval of every mixture, found by bisection on its CDF."""
    tail = 0.5 * (1.0 - level)
    sigma = np.sqrt(mixture.variances)
    low_bracket = (mixture.means - 10.0 * sigma).min(axis=1)
    high_bracket = (mixture.means + 10.0 * sigma).max(axis=1)

    def solve(prob: float) -> np.ndarray:
        lo, hi = low_bracket.copy(), high_bracket.copy()
        for _ in range(BISECTION_MAX_ITER):
            if np.max(hi - lo) <= BISECTION_TOLERANCE:
                break
            mid = 0.5 * (lo + hi)
            below = mixture.cdf(mid) < prob
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    return solve(tail), solve(1.0 - tail)


def coverage95(mixture: PredictiveMixture, targets: np.ndarray) -> float:
    """Fraction of targets inside the central 95% interval of their mixture."""
    targets = _targets_for(mixture, targets)
    lower, upper = central_interval(mixture)
    return float(np.mean((targets >= lower) & (targets <= upper)))


def _check_probs(probs: np.ndarray, labels: np.ndarray | None = None) -> np.ndarray:
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if probs.shape[0] == 0:
        raise EmptyDataError("no predictions")
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (probs.shape[0],):
            raise DimensionMismatchError(f"{labels.size} labels for {probs.shape[0]} predictions")
        if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
            raise DimensionMismatchError(f"labels must lie in [0, {probs.shape[1]})")
    return probs


def accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax is the label; ties go to the lowest index."""
    probs = _check_probs(probs, labels)
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


def nll_classification(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log probability of the true label."""
    probs = _check_probs(probs, labels)
    picked = probs[np.arange(probs.shape[0]), np.asarray(labels, dtype=np.int64)]
    return -float(np.mean(np.log(np.maximum(picked, np.finfo(np.float64).tiny))))


def reliability_bins(probs: np.ndarray, labels: np.ndarray, bins: int = 15) -> list[ReliabilityBin]:
    """Per-bin count, accuracy and mean confidence over ``((l-1)/M, l/M]``."""
    probs = _check_probs(probs, labels)
    confidence = probs.max(axis=1)
    correct = np.argmax(probs, axis=1) == np.asarray(labels)
    index = np.clip(np.ceil(confidence * bins).astype(np.int64) - 1, 0, bins - 1)

    counts = np.bincount(index, minlength=bins)
    hits = np.bincount(index, weights=correct.astype(np.float64), minlength=bins)
    conf_sums = np.bincount(index, weights=confidence, minlength=bins)
    nonempty = counts > 0
    acc = np.divide(hits, counts, out=np.zeros(bins), where=nonempty)
    conf = np.divide(conf_sums, counts, out=np.zeros(bins), where=nonempty)
    return [
        ReliabilityBin(
            lower=b / bins,
            upper=(b + 1) / bins,
            count=int(counts[b]),
            accuracy=float(acc[b]),
            confidence=float(conf[b]),
        )
        for b in range(bins)
    ]


def ece(probs: np.ndarray, labels: np.ndarray, bins: int = 15) -> float:
    """Expected calibration error with ``bins`` equal-width confidence bins."""
    table = reliability_bins(probs, labels, bins)
    total = sum(b.count for b in table)
    gap = sum(b.count * abs(b.accuracy - b.confidence) for b in table)
    return float(min(max(gap / total, 0.0), 1.0))


def _check_simplex(member_probs: np.ndarray) -> None:
    if member_probs.shape[-2] == 0:
        raise EmptyDataError("no member probabilities")
    sums = member_probs.sum(axis=-1)
    if np.any(member_probs < 0.0) or np.any(np.abs(sums - 1.0) > SIMPLEX_TOLERANCE):
        raise InvalidSimplexError("every row must be a probability vector")


def mutual_information_batch(member_probs: np.ndarray) -> np.ndarray:
    """Predictive mutual information for ``N x S x c`` member probabilities."""
    member_probs = np.asarray(member_probs, dtype=np.float64)
    if member_probs.ndim != 3:
        raise DimensionMismatchError(f"expected N x S x c, got shape {member_probs.shape}")
    _check_simplex(member_probs)
    total = entr(member_probs.mean(axis=1)).sum(axis=-1)
    expected = entr(member_probs).sum(axis=-1).mean(axis=1)
    mi = total - expected
    return np.where(mi < MI_ZERO_TOLERANCE, 0.0, mi)


def mutual_information(member_probs: np.ndarray) -> float:
    """Entropy of the mean row minus the mean row entropy, for ``S x c`` rows."""
    member_probs = np.asarray(member_probs, dtype=np.float64)
    if member_probs.ndim != 2:
        raise DimensionMismatchError(f"expected S x c, got shape {member_probs.shape}")
    return float(mutual_information_batch(member_probs[None])[0])


def auroc(scores_in: np.ndarray, scores_out: np.ndarray) -> float:
    """``P(out > in) + 0.5 P(out == in)`` over all pairs, by exact counting."""
    scores_in = np.sort(np.asarray(scores_in, dtype=np.float64).ravel())
    scores_out = np.asarray(scores_out, dtype=np.float64).ravel()
    if scores_in.size == 0 or scores_out.size == 0:
        raise EmptyDataError("both score sets must be non-empty")
    below = np.searchsorted(scores_in, scores_out, side="left")
    at_or_below = np.searchsorted(scores_in, scores_out, side="right")
    wins = int(below.sum())
    ties = int((at_or_below - below).sum())
    return (2 * wins + ties) / (2 * scores_in.size * scores_out.size)
