"""Teacher ensemble training, noise estimation, and design-point predictions."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import log_softmax, softmax

from dlf_distill.core.errors import DimensionMismatchError, EmptyDataError, NonFiniteLossError
from dlf_distill.core.logging import get_logger
from dlf_distill.core.network import (
    NetworkParams,
    adam_step,
    backward,
    forward_batch,
    init_params,
    make_spec,
)
from dlf_distill.core.numerics import SeededRng
from dlf_distill.core.storage import load_artifact, save_artifact
from dlf_distill.models.artifacts import NetworkRecord, StandardizerRecord, TeacherRecord
from dlf_distill.models.config import TeacherConfig
from dlf_distill.models.dataset import Dataset, Standardizer, Task
from dlf_distill.models.network import NetworkSpec
from dlf_distill.services.metrics_service import PredictiveMixture

logger = get_logger(__name__)

NOISE_VAR_FLOOR = 1e-8


@dataclass
class TeacherEnsemble:
    """Trained members, their noise variances and the shared standardizer.

    Noise variances are in standardized target units; regression only.
    """

    members: list[NetworkParams]
    noise_vars: np.ndarray
    standardizer: Standardizer
    task: Task = Task.REGRESSION
    class_count: int | None = None

    def __post_init__(self) -> None:
        self.noise_vars = np.asarray(self.noise_vars, dtype=np.float64)
        if len(self.members) < 2:
            raise EmptyDataError(f"an ensemble needs at least 2 members, got {len(self.members)}")
        if self.task is Task.REGRESSION:
            if self.noise_vars.shape != (len(self.members),) or np.any(self.noise_vars <= 0.0):
                raise DimensionMismatchError("one positive noise variance per member is required")

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def spec(self) -> NetworkSpec:
        return self.members[0].spec

    def to_record(self) -> TeacherRecord:
        return TeacherRecord(
            task=self.task,
            members=[
                NetworkRecord(spec=p.spec, weights=p.flatten().tolist()) for p in self.members
            ],
            noise_vars=self.noise_vars.tolist(),
            class_count=self.class_count,
            standardizer=StandardizerRecord.from_standardizer(self.standardizer),
        )

    @classmethod
    def from_record(cls, record: TeacherRecord) -> TeacherEnsemble:
        return cls(
            members=[NetworkParams.unflatten(m.spec, m.weights) for m in record.members],
            noise_vars=np.asarray(record.noise_vars, dtype=np.float64),
            standardizer=record.standardizer.to_standardizer(),
            task=record.task,
            class_count=record.class_count,
        )


def _loss_and_upstream(
    out: np.ndarray, targets: np.ndarray, task: Task
) -> tuple[float, np.ndarray]:
    n = out.shape[0]
    if task is Task.REGRESSION:
        resid = out[:, 0] - targets
        return float(np.mean(resid**2)), (2.0 / n) * resid[:, None]
    labels = targets.astype(np.int64)
    log_probs = log_softmax(out, axis=1)
    loss = -float(np.mean(log_probs[np.arange(n), labels]))
    upstream = softmax(out, axis=1)
    upstream[np.arange(n), labels] -= 1.0
    return loss, upstream / n


def fit_member(
    spec: NetworkSpec,
    features: np.ndarray,
    targets: np.ndarray,
    epochs: int,
    lr: float,
    rng: SeededRng,
    task: Task = Task.REGRESSION,
    batch_size: int | None = None,
) -> tuple[NetworkParams, list[float]]:
    """
    Train one member on standardized data with Adam.

    Regression minimizes MSE, classification softmax cross-entropy. The
    returned trace holds the full-data loss after every epoch.

    Raises:
        EmptyDataError: If there are no rows
        NonFiniteLossError: If the loss becomes NaN or infinite
    """
    n = features.shape[0]
    if n == 0:
        raise EmptyDataError("cannot train a member on zero rows")
    params = init_params(spec, rng)
    batch = n if batch_size is None else min(batch_size, n)
    state = None
    losses: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            out = forward_batch(params, features[idx])
            loss, upstream = _loss_and_upstream(out, targets[idx], task)
            if not np.isfinite(loss):
                raise NonFiniteLossError(f"member loss diverged at epoch {epoch}")
            grads = backward(params, features[idx], upstream)
            arrays, state = adam_step(params.arrays(), grads, state, lr=lr)
            params = NetworkParams.from_arrays(spec, arrays)
        loss, _ = _loss_and_upstream(forward_batch(params, features), targets, task)
        if not np.isfinite(loss):
            raise NonFiniteLossError(f"member loss diverged at epoch {epoch}")
        losses.append(loss)
    return params, losses


def estimate_noise_var(params: NetworkParams, features: np.ndarray, targets: np.ndarray) -> float:
    """Mean squared training residual, floored at ``1e-8``."""
    if features.shape[0] == 0:
        raise EmptyDataError("cannot estimate noise variance on zero rows")
    resid = forward_batch(params, features)[:, 0] - targets
    return max(float(np.mean(resid**2)), NOISE_VAR_FLOOR)


def fit_ensemble(
    train: Dataset,
    spec: NetworkSpec,
    n: int,
    epochs: int,
    lr: float,
    rng: SeededRng,
    batch_size: int | None = None,
) -> TeacherEnsemble:
    """
    Train ``n`` members from distinct seeded initializations.

    Features (and regression targets) are z-scored on ``train`` first; the
    standardizer is stored on the ensemble.

    Raises:
        EmptyDataError: If ``train`` is empty or ``n < 2``
        NonFiniteLossError: If any member diverges
    """
    if len(train) == 0:
        raise EmptyDataError("training data is empty")
    if n < 2:
        raise EmptyDataError(f"an ensemble needs at least 2 members, got {n}")
    if spec.input_dim != train.dim:
        raise DimensionMismatchError(f"spec input_dim {spec.input_dim} != data dim {train.dim}")

    regression = train.task is Task.REGRESSION
    standardizer = (
        Standardizer.fit(train.features, train.targets)
        if regression
        else Standardizer.fit(train.features)
    )
    x = standardizer.transform_features(train.features)
    y = standardizer.transform_targets(train.targets) if regression else train.targets

    members, noise_vars = [], []
    for member in range(n):
        params, losses = fit_member(
            spec, x, y, epochs, lr, rng.spawn(f"member-{member}"), train.task, batch_size
        )
        members.append(params)
        if regression:
            noise_vars.append(estimate_noise_var(params, x, y))
        logger.info(
            "Teacher member trained",
            member=member,
            epochs=epochs,
            loss=losses[-1] if losses else None,
        )

    return TeacherEnsemble(
        members=members,
        noise_vars=np.asarray(noise_vars),
        standardizer=standardizer,
        task=train.task,
        class_count=None if regression else spec.output_dim,
    )


def prediction_matrix(ensemble: TeacherEnsemble, points: np.ndarray) -> np.ndarray:
    """
    Member outputs at standardized design points.

    Returns ``m x n`` for regression (standardized target units) and the raw
    logits ``m x n x c`` for classification.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[0] == 0:
        raise EmptyDataError("design set is empty")
    if points.shape[1] != ensemble.spec.input_dim:
        raise DimensionMismatchError(
            f"design points have dim {points.shape[1]}, members expect {ensemble.spec.input_dim}"
        )
    outputs = np.stack([forward_batch(p, points) for p in ensemble.members], axis=1)
    if ensemble.task is Task.REGRESSION:
        return outputs[:, :, 0]
    return outputs


def teacher_predictive(ensemble: TeacherEnsemble, features: np.ndarray) -> PredictiveMixture:
    """Equal-weight Gaussian mixture over members, in original target units."""
    x = ensemble.standardizer.transform_features(np.atleast_2d(features))
    means = prediction_matrix(ensemble, x)
    variances = np.broadcast_to(ensemble.noise_vars, means.shape)
    return PredictiveMixture(
        means=ensemble.standardizer.inverse_targets(means),
        variances=ensemble.standardizer.inverse_variances(variances),
    )


def teacher_member_probs(ensemble: TeacherEnsemble, features: np.ndarray) -> np.ndarray:
    """Per-member softmax probabilities, ``N x n x c``."""
    x = ensemble.standardizer.transform_features(np.atleast_2d(features))
    return softmax(prediction_matrix(ensemble, x), axis=2)


class TeacherService:
    """Trains, saves and loads teacher ensembles."""

    def train(
        self,
        train: Dataset,
        config: TeacherConfig,
        rng: SeededRng,
        class_count: int | None = None,
    ) -> TeacherEnsemble:
        if train.task is Task.REGRESSION:
            output_dim = 1
        else:
            output_dim = class_count or train.class_count
        spec = make_spec(
            train.dim,
            list(config.hidden_layers),
            output_dim,
            config.activation,
        )
        return fit_ensemble(
            train,
            spec,
            n=config.count,
            epochs=config.epochs,
            lr=config.lr,
            rng=rng,
            batch_size=config.batch_size,
        )

    def save(self, ensemble: TeacherEnsemble, path: Path) -> str:
        return save_artifact(ensemble.to_record(), path)

    def load(self, path: Path) -> TeacherEnsemble:
        return TeacherEnsemble.from_record(load_artifact(path, TeacherRecord))


def get_teacher_service() -> TeacherService:
    """Get an instance of TeacherService."""
    return TeacherService()
