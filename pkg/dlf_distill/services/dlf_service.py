"""Univariate deep latent factor student.

The student network has ``q + 1`` outputs: column 0 is the mean head
``mu(x)`` and columns ``1..q`` the loadings ``Phi(x)``. Teacher function
values at the design points are modelled as

    f_i ~ N(mu, Phi Phi^T + s2 I),   i = 1..n,

with latent ``z_i ~ N(0, I_q)`` and ``f_i | z_i ~ N(mu + Phi z_i, s2 I)``.
Prediction matrices are ``m x n``: one row per design point, one column
per teacher. All values are in standardized target units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Generic, TypeVar

import numpy as np
from scipy import linalg

from dlf_distill.core.errors import DimensionMismatchError, DistillError, NonFiniteLossError
from dlf_distill.core.logging import get_logger
from dlf_distill.core.network import (
    NetworkParams,
    adam_step,
    backward,
    forward_batch,
    init_params,
    make_spec,
)
from dlf_distill.core.numerics import (
    LOG_2PI,
    LowRankGaussian,
    NotPositiveDefiniteError,
    SeededRng,
    cholesky,
    sample_std_normal,
)
from dlf_distill.core.storage import load_artifact, save_artifact
from dlf_distill.models.artifacts import DlfRecord, NetworkRecord, StandardizerRecord
from dlf_distill.models.config import DesignStrategy, EmConfig
from dlf_distill.models.dataset import Standardizer
from dlf_distill.models.network import Activation
from dlf_distill.services.design_service import DesignSet
from dlf_distill.services.em_engine import EmResult, run_em
from dlf_distill.services.metrics_service import PredictiveMixture
from dlf_distill.services.mmd_service import median_bandwidth, mmd, mmd_with_grad
from dlf_distill.services.noise_service import InverseGammaParams, sample_inverse_gamma

logger = get_logger(__name__)

JITTER_INIT_FRACTION = 0.01
JITTER_FLOOR = 1e-8
LATENT_INIT_SCALE = 0.1

ModelT = TypeVar("ModelT")


class SingularPrecisionError(DistillError):
    """The latent posterior precision could not be factorized."""

    pass


def _heads(params: NetworkParams, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    out = forward_batch(params, points)
    return out[:, 0], out[:, 1:]


@dataclass
class DlfModel:
    """Student network, log jitter, design set and the shared standardizer."""

    params: NetworkParams
    log_jitter: float
    design: DesignSet
    standardizer: Standardizer
    noise: InverseGammaParams | None = None

    def __post_init__(self) -> None:
        if self.params.spec.output_dim < 2:
            raise DimensionMismatchError("a DLF student needs q + 1 >= 2 outputs")
        if self.design.points.shape[1] != self.params.spec.input_dim:
            raise DimensionMismatchError("design points do not match the network input size")

    @property
    def latent_dim(self) -> int:
        return self.params.spec.output_dim - 1

    @property
    def jitter(self) -> float:
        return float(np.exp(self.log_jitter))

    def heads(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``mu`` (length N) and ``Phi`` (``N x q``) at standardized points."""
        return _heads(self.params, points)

    def design_heads(self, index: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        points = self.design.points if index is None else self.design.points[index]
        return self.heads(points)

    def observation_law(self) -> LowRankGaussian:
        mu, phi = self.design_heads()
        return LowRankGaussian(mu, phi, self.jitter)

    def to_record(self) -> DlfRecord:
        return DlfRecord(
            network=NetworkRecord(spec=self.params.spec, weights=self.params.flatten().tolist()),
            log_jitter=float(self.log_jitter),
            latent_dim=self.latent_dim,
            design_provenance=self.design.provenance.value,
            design_points=self.design.points.tolist(),
            standardizer=StandardizerRecord.from_standardizer(self.standardizer),
            noise=self.noise.to_record() if self.noise else None,
        )

    @classmethod
    def from_record(cls, record: DlfRecord) -> DlfModel:
        return cls(
            params=NetworkParams.unflatten(record.network.spec, record.network.weights),
            log_jitter=record.log_jitter,
            design=DesignSet(
                points=np.asarray(record.design_points, dtype=np.float64),
                provenance=DesignStrategy(record.design_provenance),
            ),
            standardizer=record.standardizer.to_standardizer(),
            noise=InverseGammaParams.from_record(record.noise) if record.noise else None,
        )


@dataclass
class PosteriorStats:
    """Gaussian posterior of the latents, one mean row per teacher.

    The covariance ``cov`` is shared by every teacher.
    """

    means: np.ndarray
    cov: np.ndarray

    @property
    def count(self) -> int:
        return int(self.means.shape[0])

    @property
    def second_moments(self) -> np.ndarray:
        """``E[z_i z_i^T] = cov + mean_i mean_i^T``, shape ``n x q x q``."""
        return self.cov[None, :, :] + np.einsum("ia,ib->iab", self.means, self.means)

    @property
    def second_moment_sum(self) -> np.ndarray:
        return self.count * self.cov + self.means.T @ self.means


def _check_matrix(model: DlfModel, pred: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 2 or pred.shape[0] != model.design.size:
        raise DimensionMismatchError(
            f"prediction matrix {pred.shape} does not match {model.design.size} design points"
        )
    return pred


def posterior_from_heads(
    mu: np.ndarray, phi: np.ndarray, jitter: float, values: np.ndarray
) -> PosteriorStats:
    """
    Latent posterior for teacher rows ``values`` (``n x b``).

    ``V = (I + Phi^T Phi / s2)^-1`` and ``E[z_i] = V Phi^T (f_i - mu) / s2``.
    """
    q = phi.shape[1]
    precision = np.eye(q) + phi.T @ phi / jitter
    try:
        factor = cholesky(precision)
    except NotPositiveDefiniteError as exc:
        raise SingularPrecisionError(str(exc)) from exc
    cov = linalg.cho_solve((factor, True), np.eye(q))
    cov = 0.5 * (cov + cov.T)
    resid = values - mu[None, :]
    means = resid @ phi @ cov / jitter
    return PosteriorStats(means=means, cov=cov)


def e_step(model: DlfModel, pred: np.ndarray, index: np.ndarray | None = None) -> PosteriorStats:
    """Closed-form latent posterior from the design points in ``index`` (all if None)."""
    pred = _check_matrix(model, pred)
    rows = np.arange(model.design.size) if index is None else np.asarray(index)
    if rows.size == 0:
        raise DimensionMismatchError("e_step needs at least one design point")
    mu, phi = model.design_heads(rows)
    return posterior_from_heads(mu, phi, model.jitter, pred[rows].T)


def q_from_heads(
    mu: np.ndarray,
    phi: np.ndarray,
    log_jitter: float,
    stats: PosteriorStats,
    values: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray, float]:
    """
    Expected complete log-likelihood and its gradients.

    Returns ``(Q, dQ/dmu, dQ/dPhi, dQ/dlog s2)`` for teacher rows ``values``
    (``n x b``) under a posterior computed elsewhere.
    """
    n, b = values.shape
    q = phi.shape[1]
    if stats.count != n or stats.means.shape[1] != q:
        raise DimensionMismatchError(
            f"posterior {stats.means.shape} does not match {n} teachers and q={q}"
        )
    s2 = float(np.exp(log_jitter))
    resid = values - mu[None, :]
    means = stats.means
    second = stats.second_moment_sum
    projected = resid @ phi

    sq_resid = float(np.sum(resid**2))
    cross = float(np.sum(projected * means))
    trace_term = float(np.sum((phi.T @ phi) * second))
    expected_sq = sq_resid - 2.0 * cross + trace_term

    q_value = (
        -0.5 * n * b * (LOG_2PI + log_jitter)
        - 0.5 * n * q * LOG_2PI
        - 0.5 * float(np.trace(second))
        - expected_sq / (2.0 * s2)
    )
    grad_mu = (resid.sum(axis=0) - phi @ means.sum(axis=0)) / s2
    grad_phi = (resid.T @ means - phi @ second) / s2
    grad_log_jitter = -0.5 * n * b + expected_sq / (2.0 * s2)
    return q_value, grad_mu, grad_phi, grad_log_jitter


def q_objective(
    model: DlfModel,
    stats: PosteriorStats,
    pred: np.ndarray,
    index: np.ndarray | None = None,
) -> tuple[float, list[np.ndarray]]:
    """
    ``Q`` at ``model`` for a fixed posterior, with gradients.

    Gradients come in the order of ``NetworkParams.arrays()`` followed by the
    0-d gradient with respect to the log jitter.
    """
    pred = _check_matrix(model, pred)
    rows = np.arange(model.design.size) if index is None else np.asarray(index)
    points = model.design.points[rows]
    mu, phi = model.heads(points)
    q_value, grad_mu, grad_phi, grad_log_jitter = q_from_heads(
        mu, phi, model.log_jitter, stats, pred[rows].T
    )
    upstream = np.column_stack([grad_mu, grad_phi])
    grads = backward(model.params, points, upstream)
    return q_value, [*grads, np.asarray(grad_log_jitter)]


def observed_loglik(model: DlfModel, pred: np.ndarray) -> float:
    """``sum_i log N(f_i; mu, Phi Phi^T + s2 I)`` over teacher columns."""
    pred = _check_matrix(model, pred)
    return float(model.observation_law().logpdf_rows(pred.T).sum())


class DlfEmAdapter:
    """Binds a prediction matrix to the EM engine."""

    def __init__(self, pred: np.ndarray) -> None:
        self.pred = np.asarray(pred, dtype=np.float64)

    def arrays(self, model: DlfModel) -> list[np.ndarray]:
        return [*model.params.arrays(), np.asarray(model.log_jitter)]

    def rebuild(self, model: DlfModel, arrays: list[np.ndarray]) -> DlfModel:
        params = NetworkParams.from_arrays(model.params.spec, arrays[:-1])
        return DlfModel(
            params=params,
            log_jitter=float(arrays[-1]),
            design=model.design,
            standardizer=model.standardizer,
            noise=model.noise,
        )

    def posterior(self, model: DlfModel, index: np.ndarray) -> PosteriorStats:
        return e_step(model, self.pred, index)

    def q_and_grads(
        self, model: DlfModel, stats: PosteriorStats, index: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        return q_objective(model, stats, self.pred, index)

    def loglik(self, model: DlfModel) -> float:
        return observed_loglik(model, self.pred)


def em_fit(
    model: DlfModel, pred: np.ndarray, config: EmConfig, rng: SeededRng
) -> EmResult[DlfModel]:
    """Fit a univariate DLF by EM; see ``run_em`` for the two modes."""
    pred = _check_matrix(model, pred)
    return run_em(model, DlfEmAdapter(pred), model.design.size, config, rng)


def init_model(
    design: DesignSet,
    standardizer: Standardizer,
    latent_dim: int,
    pred: np.ndarray,
    rng: SeededRng,
    hidden_layers: list[int] | None = None,
    activation: Activation = Activation.RELU,
) -> DlfModel:
    """Random student with the jitter set to 1% of the prediction variance."""
    spec = make_spec(
        design.points.shape[1],
        list(hidden_layers if hidden_layers is not None else [50]),
        latent_dim + 1,
        activation,
    )
    jitter = max(JITTER_INIT_FRACTION * float(np.var(pred)), JITTER_FLOOR)
    return DlfModel(
        params=init_params(spec, rng),
        log_jitter=float(np.log(jitter)),
        design=design,
        standardizer=standardizer,
    )


@dataclass
class PretrainResult(Generic[ModelT]):
    """Pretrained model plus the discarded latents and MMD diagnostics."""

    model: ModelT
    latents: np.ndarray
    initial_mmd: float
    final_mmd: float
    objective_trace: list[float] = field(default_factory=list)


def _complete_loglik(
    mu: np.ndarray, phi: np.ndarray, log_jitter: float, latents: np.ndarray, values: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray, float]:
    n, m = values.shape
    q = phi.shape[1]
    s2 = float(np.exp(log_jitter))
    resid = values - mu[None, :] - latents @ phi.T
    sq = float(np.sum(resid**2))
    value = (
        -0.5 * n * m * (LOG_2PI + log_jitter)
        - sq / (2.0 * s2)
        - 0.5 * n * q * LOG_2PI
        - 0.5 * float(np.sum(latents**2))
    )
    grad_mu = resid.sum(axis=0) / s2
    grad_phi = resid.T @ latents / s2
    grad_latents = resid @ phi / s2 - latents
    grad_log_jitter = -0.5 * n * m + sq / (2.0 * s2)
    return value, grad_mu, grad_phi, grad_latents, grad_log_jitter


def mmd_pretrain(
    model: DlfModel,
    pred: np.ndarray,
    penalty: float,
    epochs: int,
    rng: SeededRng,
    lr: float = 1e-3,
    bandwidth: float | None = None,
) -> PretrainResult[DlfModel]:
    """
    Jointly maximize the complete log-likelihood over the network and free
    latents, minus ``penalty`` times the MMD between the latents and fresh
    standard-normal draws.

    Latents start at ``0.1 * N(0, I)``. The RBF bandwidth is the median
    pairwise distance of the pooled samples unless given, and is held fixed
    within an epoch. ``penalty == 0`` drops the MMD term entirely.

    Raises:
        ValueError: If ``penalty`` is negative
        NonFiniteLossError: If the objective stops being finite
    """
    if penalty < 0.0:
        raise ValueError(f"MMD penalty must be >= 0, got {penalty}")
    pred = _check_matrix(model, pred)
    values = pred.T
    n, q = values.shape[0], model.latent_dim
    points = model.design.points
    latents = LATENT_INIT_SCALE * sample_std_normal(rng.spawn("latents"), n, q)

    reference = sample_std_normal(rng.spawn("reference"), n, q)
    ref_bandwidth = bandwidth or median_bandwidth(latents, reference)
    initial_mmd = mmd(latents, reference, ref_bandwidth)

    draws_rng = rng.spawn("draws")
    arrays = [*model.params.arrays(), np.asarray(model.log_jitter), latents]
    state = None
    trace: list[float] = []
    for epoch in range(epochs):
        params = NetworkParams.from_arrays(model.params.spec, arrays[:-2])
        log_jitter, latents = float(arrays[-2]), arrays[-1]
        mu, phi = _heads(params, points)
        value, g_mu, g_phi, g_latents, g_log_jitter = _complete_loglik(
            mu, phi, log_jitter, latents, values
        )
        if penalty > 0.0:
            draws = sample_std_normal(draws_rng, n, q)
            gamma = bandwidth or median_bandwidth(latents, draws)
            distance, g_mmd = mmd_with_grad(latents, draws, gamma)
            value -= penalty * distance
            g_latents = g_latents - penalty * g_mmd
        if not np.isfinite(value):
            raise NonFiniteLossError(f"pretraining objective diverged at epoch {epoch}")
        trace.append(value)

        net_grads = backward(params, points, np.column_stack([g_mu, g_phi]))
        grads = [*net_grads, np.asarray(g_log_jitter), g_latents]
        arrays, state = adam_step(arrays, [-g for g in grads], state, lr=lr)
        logger.debug("Pretraining epoch", epoch=epoch, objective=value)

    latents = arrays[-1]
    pretrained = DlfModel(
        params=NetworkParams.from_arrays(model.params.spec, arrays[:-2]),
        log_jitter=float(arrays[-2]),
        design=model.design,
        standardizer=model.standardizer,
        noise=model.noise,
    )
    final_mmd = mmd(latents, reference, ref_bandwidth)
    logger.info(
        "Pretraining finished",
        epochs=epochs,
        penalty=penalty,
        initial_mmd=initial_mmd,
        final_mmd=final_mmd,
    )
    return PretrainResult(
        model=pretrained,
        latents=latents,
        initial_mmd=initial_mmd,
        final_mmd=final_mmd,
        objective_trace=trace,
    )


def sample_student_functions(
    model: DlfModel,
    points: np.ndarray,
    count: int,
    rng: SeededRng,
    include_jitter: bool = False,
) -> np.ndarray:
    """
    ``count x N`` draws of ``mu(x) + Phi(x) z`` at standardized points.

    The observation jitter is left out unless ``include_jitter`` is set.
    """
    mu, phi = model.heads(np.atleast_2d(points))
    latents = sample_std_normal(rng, count, model.latent_dim)
    samples = mu[None, :] + latents @ phi.T
    if include_jitter:
        samples = samples + np.sqrt(model.jitter) * sample_std_normal(rng, count, mu.size)
    return samples


def predictive_mixture(
    model: DlfModel,
    features: np.ndarray,
    count: int,
    rng: SeededRng,
    noise: InverseGammaParams | None = None,
    include_jitter: bool = False,
) -> PredictiveMixture:
    """
    Student predictive distribution at raw features, in original target units.

    Each of the ``count`` components pairs a sampled student function with a
    noise variance drawn from the distilled inverse gamma.
    """
    noise = noise or model.noise
    if noise is None:
        raise DistillError("the model carries no distilled noise distribution")
    x = model.standardizer.transform_features(np.atleast_2d(features))
    functions = sample_student_functions(
        model, x, count, rng.spawn("functions"), include_jitter
    )
    variances = sample_inverse_gamma(noise, count, rng.spawn("noise"))
    return PredictiveMixture(
        means=model.standardizer.inverse_targets(functions.T),
        variances=model.standardizer.inverse_variances(
            np.broadcast_to(variances, functions.T.shape)
        ),
    )


def save_model(model: DlfModel, path: Path) -> str:
    return save_artifact(model.to_record(), path)


def load_model(path: Path) -> DlfModel:
    return DlfModel.from_record(load_artifact(path, DlfRecord))
