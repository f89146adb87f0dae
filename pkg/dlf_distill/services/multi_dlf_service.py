"""Multivariate (matrix-variate) deep latent factor student for classification.

The student network has ``c + q`` outputs: the first ``c`` are the mean
logits ``mu(x)``, the last ``q`` the loadings ``Phi(x)`` shared by every
class. A function draw is ``f(x) = mu(x) + L Z Phi(x)`` with ``Z`` a ``c x q``
standard-normal matrix and ``L`` lower triangular with a softplus-positive
diagonal. Over ``m`` design points the logits form an ``m x c`` matrix

    F = M + Phi Z^T L^T,

and with ``vec`` stacking columns, ``vec(F) = vec(M) + (L kron Phi) vec(Z^T)``
so ``cov(vec F) = L L^T kron Phi Phi^T``. The latent vector
``u = vec(Z^T)`` has entry ``k * q + r`` equal to ``Z[k, r]``, i.e.
``Z = u.reshape(c, q)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.special import expit, softmax

from dlf_distill.core.errors import DimensionMismatchError, NonFiniteLossError
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
    inverse_softplus,
    sample_std_normal,
    softplus,
)
from dlf_distill.core.storage import load_artifact, save_artifact
from dlf_distill.models.artifacts import MultiDlfRecord, NetworkRecord, StandardizerRecord
from dlf_distill.models.config import DesignStrategy, EmConfig
from dlf_distill.models.dataset import Standardizer
from dlf_distill.models.network import Activation
from dlf_distill.services.design_service import DesignSet
from dlf_distill.services.dlf_service import (
    JITTER_FLOOR,
    JITTER_INIT_FRACTION,
    LATENT_INIT_SCALE,
    PosteriorStats,
    PretrainResult,
    SingularPrecisionError,
)
from dlf_distill.services.em_engine import EmResult, run_em
from dlf_distill.services.mmd_service import median_bandwidth, mmd, mmd_with_grad

logger = get_logger(__name__)


def chol_from_raw(raw: np.ndarray) -> np.ndarray:
    """Lower triangle of ``raw`` with the diagonal passed through softplus."""
    raw = np.asarray(raw, dtype=np.float64)
    return np.tril(raw, -1) + np.diag(softplus(np.diag(raw)))


def identity_chol_raw(class_count: int) -> np.ndarray:
    """Unconstrained factor whose ``chol_from_raw`` is the identity."""
    return np.diag(np.full(class_count, float(inverse_softplus(1.0))))


@dataclass
class MultiDlfModel:
    """Student network, Cholesky factor of the class covariance, and log jitter."""

    params: NetworkParams
    chol_raw: np.ndarray
    log_jitter: float
    design: DesignSet
    standardizer: Standardizer
    class_count: int

    def __post_init__(self) -> None:
        self.chol_raw = np.tril(np.asarray(self.chol_raw, dtype=np.float64))
        c = self.class_count
        if self.chol_raw.shape != (c, c):
            raise DimensionMismatchError(f"factor shape {self.chol_raw.shape} != ({c}, {c})")
        if self.params.spec.output_dim <= c:
            raise DimensionMismatchError("a multivariate student needs c + q outputs with q >= 1")
        if self.design.points.shape[1] != self.params.spec.input_dim:
            raise DimensionMismatchError("design points do not match the network input size")

    @property
    def latent_dim(self) -> int:
        return self.params.spec.output_dim - self.class_count

    @property
    def jitter(self) -> float:
        return float(np.exp(self.log_jitter))

    @property
    def chol_factor(self) -> np.ndarray:
        return chol_from_raw(self.chol_raw)

    def heads(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean logits ``N x c`` and shared loadings ``N x q`` at standardized points."""
        out = forward_batch(self.params, points)
        return out[:, : self.class_count], out[:, self.class_count :]

    def to_record(self) -> MultiDlfRecord:
        rows, cols = np.tril_indices(self.class_count)
        return MultiDlfRecord(
            network=NetworkRecord(spec=self.params.spec, weights=self.params.flatten().tolist()),
            chol_raw=self.chol_raw[rows, cols].tolist(),
            log_jitter=float(self.log_jitter),
            class_count=self.class_count,
            latent_dim=self.latent_dim,
            design_provenance=self.design.provenance.value,
            design_points=self.design.points.tolist(),
            standardizer=StandardizerRecord.from_standardizer(self.standardizer),
        )

    @classmethod
    def from_record(cls, record: MultiDlfRecord) -> MultiDlfModel:
        c = record.class_count
        rows, cols = np.tril_indices(c)
        if len(record.chol_raw) != rows.size:
            raise DimensionMismatchError(
                f"packed factor has {len(record.chol_raw)} entries, expected {rows.size}"
            )
        raw = np.zeros((c, c))
        raw[rows, cols] = record.chol_raw
        return cls(
            params=NetworkParams.unflatten(record.network.spec, record.network.weights),
            chol_raw=raw,
            log_jitter=record.log_jitter,
            design=DesignSet(
                points=np.asarray(record.design_points, dtype=np.float64),
                provenance=DesignStrategy(record.design_provenance),
            ),
            standardizer=record.standardizer.to_standardizer(),
            class_count=c,
        )


def _residuals(model: MultiDlfModel, logits: np.ndarray, index: np.ndarray) -> np.ndarray:
    """Teacher residuals ``n x b x c`` at the design points in ``index``."""
    mean, _ = model.heads(model.design.points[index])
    return np.transpose(logits[index], (1, 0, 2)) - mean[None, :, :]


def _check_logits(model: MultiDlfModel, logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    expected = (model.design.size, model.class_count)
    if logits.ndim != 3 or (logits.shape[0], logits.shape[2]) != expected:
        raise DimensionMismatchError(
            f"teacher logits {logits.shape} do not match m x n x c with (m, c) = {expected}"
        )
    return logits


def _rows(model: MultiDlfModel, index: np.ndarray | None) -> np.ndarray:
    rows = np.arange(model.design.size) if index is None else np.asarray(index)
    if rows.size == 0:
        raise DimensionMismatchError("at least one design point is required")
    return rows


def vec_observation_law(model: MultiDlfModel, index: np.ndarray | None = None) -> LowRankGaussian:
    """
    Law of ``vec(F)`` (column-stacked ``m x c`` logits) at the design points.

    The loading is ``L kron Phi``, so the covariance is
    ``L L^T kron Phi Phi^T + s2 I``.
    """
    rows = _rows(model, index)
    mean, phi = model.heads(model.design.points[rows])
    loading = np.kron(model.chol_factor, phi)
    return LowRankGaussian(mean.ravel(order="F"), loading, model.jitter)


def e_step_vec(
    model: MultiDlfModel, logits: np.ndarray, index: np.ndarray | None = None
) -> PosteriorStats:
    """
    Posterior of ``u_i = vec(Z_i^T)`` per teacher.

    ``V = (I + (L^T L) kron (Phi^T Phi) / s2)^-1`` and
    ``E[u_i] = V vec(Phi^T R_i L) / s2``.
    """
    logits = _check_logits(model, logits)
    rows = _rows(model, index)
    resid = _residuals(model, logits, rows)
    _, phi = model.heads(model.design.points[rows])
    chol = model.chol_factor
    s2 = model.jitter
    c, q = model.class_count, model.latent_dim

    precision = np.eye(c * q) + np.kron(chol.T @ chol, phi.T @ phi) / s2
    try:
        factor = cholesky(precision)
    except NotPositiveDefiniteError as exc:
        raise SingularPrecisionError(str(exc)) from exc
    cov = linalg.cho_solve((factor, True), np.eye(c * q))
    cov = 0.5 * (cov + cov.T)
    projected = np.einsum("mq,imc,cd->idq", phi, resid, chol).reshape(resid.shape[0], c * q)
    return PosteriorStats(means=projected @ cov / s2, cov=cov)


def q_objective_vec(
    model: MultiDlfModel,
    stats: PosteriorStats,
    logits: np.ndarray,
    index: np.ndarray | None = None,
    train_chol_factor: bool = True,
) -> tuple[float, list[np.ndarray]]:
    """
    Expected complete log-likelihood with gradients.

    Gradients follow ``NetworkParams.arrays()``, then the unconstrained
    factor (lower triangle only; zero when ``train_chol_factor`` is off),
    then the log jitter.
    """
    logits = _check_logits(model, logits)
    rows = _rows(model, index)
    points = model.design.points[rows]
    mean, phi = model.heads(points)
    resid = np.transpose(logits[rows], (1, 0, 2)) - mean[None, :, :]
    n, b, c = resid.shape
    q = model.latent_dim
    if stats.means.shape != (n, c * q):
        raise DimensionMismatchError(
            f"posterior {stats.means.shape} does not match ({n}, {c * q})"
        )
    chol = model.chol_factor
    s2 = model.jitter
    latents = stats.means.reshape(n, c, q)
    second = stats.second_moment_sum.reshape(c, q, c, q)

    gram_l = chol.T @ chol
    gram_phi = phi.T @ phi
    g_mat = np.einsum("ab,arbs->rs", gram_l, second)
    h_mat = np.einsum("rs,arbs->ab", gram_phi, second)

    sq_resid = float(np.sum(resid**2))
    cross = float(np.einsum("imc,mq,idq,cd->", resid, phi, latents, chol))
    trace_term = float(np.sum(gram_phi * g_mat))
    expected_sq = sq_resid - 2.0 * cross + trace_term

    q_value = (
        -0.5 * n * b * c * (LOG_2PI + model.log_jitter)
        - 0.5 * n * c * q * LOG_2PI
        - 0.5 * float(np.trace(stats.second_moment_sum))
        - expected_sq / (2.0 * s2)
    )
    grad_mean = (resid.sum(axis=0) - phi @ latents.sum(axis=0).T @ chol.T) / s2
    d_cross_phi = np.einsum("imc,cd,idq->mq", resid, chol, latents)
    grad_phi = -(-2.0 * d_cross_phi + phi @ (g_mat + g_mat.T)) / (2.0 * s2)
    d_cross_chol = np.einsum("imc,mq,idq->cd", resid, phi, latents)
    grad_chol = -(-2.0 * d_cross_chol + chol @ (h_mat + h_mat.T)) / (2.0 * s2)
    grad_log_jitter = -0.5 * n * b * c + expected_sq / (2.0 * s2)

    grad_raw = np.tril(grad_chol, -1) + np.diag(np.diag(grad_chol) * expit(np.diag(model.chol_raw)))
    if not train_chol_factor:
        grad_raw = np.zeros_like(grad_raw)
    net_grads = backward(model.params, points, np.column_stack([grad_mean, grad_phi]))
    return q_value, [*net_grads, grad_raw, np.asarray(grad_log_jitter)]


def observed_loglik_vec(model: MultiDlfModel, logits: np.ndarray) -> float:
    """``sum_i log N(vec F_i; vec M, L L^T kron Phi Phi^T + s2 I)``."""
    logits = _check_logits(model, logits)
    law = vec_observation_law(model)
    stacked = np.transpose(logits, (1, 2, 0)).reshape(logits.shape[1], -1)
    return float(law.logpdf_rows(stacked).sum())


class MultiDlfEmAdapter:
    """Binds teacher logits to the EM engine."""

    def __init__(self, logits: np.ndarray, train_chol_factor: bool = True) -> None:
        self.logits = np.asarray(logits, dtype=np.float64)
        self.train_chol_factor = train_chol_factor

    def arrays(self, model: MultiDlfModel) -> list[np.ndarray]:
        return [*model.params.arrays(), model.chol_raw, np.asarray(model.log_jitter)]

    def rebuild(self, model: MultiDlfModel, arrays: list[np.ndarray]) -> MultiDlfModel:
        return MultiDlfModel(
            params=NetworkParams.from_arrays(model.params.spec, arrays[:-2]),
            chol_raw=arrays[-2],
            log_jitter=float(arrays[-1]),
            design=model.design,
            standardizer=model.standardizer,
            class_count=model.class_count,
        )

    def posterior(self, model: MultiDlfModel, index: np.ndarray) -> PosteriorStats:
        return e_step_vec(model, self.logits, index)

    def q_and_grads(
        self, model: MultiDlfModel, stats: PosteriorStats, index: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        return q_objective_vec(model, stats, self.logits, index, self.train_chol_factor)

    def loglik(self, model: MultiDlfModel) -> float:
        return observed_loglik_vec(model, self.logits)


def em_fit_multi(
    model: MultiDlfModel, logits: np.ndarray, config: EmConfig, rng: SeededRng
) -> EmResult[MultiDlfModel]:
    """Fit the multivariate student by EM on raw teacher logits (``m x n x c``)."""
    logits = _check_logits(model, logits)
    adapter = MultiDlfEmAdapter(logits, config.train_chol_factor)
    return run_em(model, adapter, model.design.size, config, rng)


def init_multi_model(
    design: DesignSet,
    standardizer: Standardizer,
    class_count: int,
    latent_dim: int,
    logits: np.ndarray,
    rng: SeededRng,
    hidden_layers: list[int] | None = None,
    activation: Activation = Activation.RELU,
) -> MultiDlfModel:
    """Random student with ``L = I`` and the jitter at 1% of the logit variance."""
    spec = make_spec(
        design.points.shape[1],
        list(hidden_layers if hidden_layers is not None else [50]),
        class_count + latent_dim,
        activation,
    )
    jitter = max(JITTER_INIT_FRACTION * float(np.var(logits)), JITTER_FLOOR)
    return MultiDlfModel(
        params=init_params(spec, rng),
        chol_raw=identity_chol_raw(class_count),
        log_jitter=float(np.log(jitter)),
        design=design,
        standardizer=standardizer,
        class_count=class_count,
    )


def mmd_pretrain_multi(
    model: MultiDlfModel,
    logits: np.ndarray,
    penalty: float,
    epochs: int,
    rng: SeededRng,
    lr: float = 1e-3,
    bandwidth: float | None = None,
) -> PretrainResult[MultiDlfModel]:
    """MMD-penalized joint pretraining over the network, ``L``, jitter and latents ``Z_i``."""
    if penalty < 0.0:
        raise ValueError(f"MMD penalty must be >= 0, got {penalty}")
    logits = _check_logits(model, logits)
    values = np.transpose(logits, (1, 0, 2))
    n, m, c = values.shape
    q = model.latent_dim
    points = model.design.points
    latents = LATENT_INIT_SCALE * sample_std_normal(rng.spawn("latents"), n, c * q)

    reference = sample_std_normal(rng.spawn("reference"), n, c * q)
    ref_bandwidth = bandwidth or median_bandwidth(latents, reference)
    initial_mmd = mmd(latents, reference, ref_bandwidth)

    draws_rng = rng.spawn("draws")
    arrays = [*model.params.arrays(), model.chol_raw, np.asarray(model.log_jitter), latents]
    state = None
    trace: list[float] = []
    for epoch in range(epochs):
        params = NetworkParams.from_arrays(model.params.spec, arrays[:-3])
        raw, log_jitter, latents = arrays[-3], float(arrays[-2]), arrays[-1]
        chol = chol_from_raw(raw)
        s2 = float(np.exp(log_jitter))
        out = forward_batch(params, points)
        mean, phi = out[:, :c], out[:, c:]
        z = latents.reshape(n, c, q)
        resid = values - mean[None] - np.einsum("mq,idq,cd->imc", phi, z, chol)
        sq = float(np.sum(resid**2))
        value = (
            -0.5 * n * m * c * (LOG_2PI + log_jitter)
            - sq / (2.0 * s2)
            - 0.5 * n * c * q * LOG_2PI
            - 0.5 * float(np.sum(latents**2))
        )
        g_mean = resid.sum(axis=0) / s2
        g_phi = np.einsum("imc,cd,idq->mq", resid, chol, z) / s2
        g_chol = np.einsum("imc,mq,idq->cd", resid, phi, z) / s2
        g_latents = (np.einsum("imc,mq,cd->idq", resid, phi, chol) / s2 - z).reshape(n, c * q)
        g_log_jitter = -0.5 * n * m * c + sq / (2.0 * s2)
        if penalty > 0.0:
            draws = sample_std_normal(draws_rng, n, c * q)
            gamma = bandwidth or median_bandwidth(latents, draws)
            distance, g_mmd = mmd_with_grad(latents, draws, gamma)
            value -= penalty * distance
            g_latents = g_latents - penalty * g_mmd
        if not np.isfinite(value):
            raise NonFiniteLossError(f"pretraining objective diverged at epoch {epoch}")
        trace.append(value)

        g_raw = np.tril(g_chol, -1) + np.diag(np.diag(g_chol) * expit(np.diag(raw)))
        net_grads = backward(params, points, np.column_stack([g_mean, g_phi]))
        grads = [*net_grads, g_raw, np.asarray(g_log_jitter), g_latents]
        arrays, state = adam_step(arrays, [-g for g in grads], state, lr=lr)
        logger.debug("Pretraining epoch", epoch=epoch, objective=value)

    latents = arrays[-1]
    pretrained = MultiDlfModel(
        params=NetworkParams.from_arrays(model.params.spec, arrays[:-3]),
        chol_raw=arrays[-3],
        log_jitter=float(arrays[-2]),
        design=model.design,
        standardizer=model.standardizer,
        class_count=c,
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


def sample_member_logits(
    model: MultiDlfModel, features: np.ndarray, count: int, rng: SeededRng
) -> np.ndarray:
    """``N x S x c`` sampled logits ``mu(x) + L Z_s Phi(x)`` at raw features."""
    x = model.standardizer.transform_features(np.atleast_2d(features))
    mean, phi = model.heads(x)
    c, q = model.class_count, model.latent_dim
    z = sample_std_normal(rng, count, c * q).reshape(count, c, q)
    return mean[:, None, :] + np.einsum("nq,sdq,cd->nsc", phi, z, model.chol_factor)


def sample_member_probs(
    model: MultiDlfModel, features: np.ndarray, count: int, rng: SeededRng
) -> np.ndarray:
    """Softmax of sampled logits, ``N x S x c``."""
    return softmax(sample_member_logits(model, features, count, rng), axis=2)


def predictive_probs(
    model: MultiDlfModel, features: np.ndarray, count: int, rng: SeededRng
) -> np.ndarray:
    """Average of ``count`` sampled softmax vectors per input, ``N x c``."""
    return sample_member_probs(model, features, count, rng).mean(axis=1)


def save_multi_model(model: MultiDlfModel, path: Path) -> str:
    return save_artifact(model.to_record(), path)


def load_multi_model(path: Path) -> MultiDlfModel:
    return MultiDlfModel.from_record(load_artifact(path, MultiDlfRecord))
