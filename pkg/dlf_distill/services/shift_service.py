"""Head-only adaptation of a frozen multivariate student to shifted data.

The distilled body (mean logits, loadings and class factor) stays fixed;
only the ``c x q`` head ``W`` is learned, giving probabilities
``softmax(mu(x) + L W Phi(x))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import log_softmax, softmax

from dlf_distill.core.errors import DimensionMismatchError, EmptyDataError, NonFiniteLossError
from dlf_distill.core.logging import get_logger
from dlf_distill.core.network import adam_step
from dlf_distill.core.numerics import SeededRng
from dlf_distill.core.storage import ArtifactError, content_hash, load_artifact, save_artifact
from dlf_distill.models.artifacts import HeadRecord
from dlf_distill.models.dataset import Dataset
from dlf_distill.services.multi_dlf_service import MultiDlfModel

logger = get_logger(__name__)

HEAD_L2_WEIGHT = 1e-4


@dataclass
class AdaptedHead:
    """Head weights bound to a frozen body."""

    weights: np.ndarray
    body: MultiDlfModel
    body_sha256: str
    loss_trace: list[float] = field(default_factory=list)

    def to_record(self) -> HeadRecord:
        return HeadRecord(body_sha256=self.body_sha256, weights=self.weights.tolist())


def body_hash(body: MultiDlfModel) -> str:
    return content_hash(body.to_record())


def _adapted_logits(body: MultiDlfModel, x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    mean, phi = body.heads(x)
    return mean + phi @ weights.T @ body.chol_factor.T


def fit_head(
    body: MultiDlfModel,
    data: Dataset,
    epochs: int,
    lr: float,
    rng: SeededRng,
    batch_size: int | None = None,
    l2_weight: float = HEAD_L2_WEIGHT,
) -> AdaptedHead:
    """
    Fit ``W`` by Adam on cross-entropy plus ``l2_weight * |W|^2``, from ``W = 0``.

    The loss trace holds the full-data objective after every epoch.

    Raises:
        EmptyDataError: If ``data`` is empty
        DimensionMismatchError: If a label is outside ``[0, c)``
        NonFiniteLossError: If the objective stops being finite
    """
    n = len(data)
    if n == 0:
        raise EmptyDataError("adaptation data is empty")
    labels = data.targets.astype(np.int64)
    c, q = body.class_count, body.latent_dim
    if np.any(labels < 0) or np.any(labels >= c):
        raise DimensionMismatchError(f"labels must lie in [0, {c})")

    digest = body_hash(body)
    x = body.standardizer.transform_features(data.features)
    mean, phi = body.heads(x)
    chol = body.chol_factor
    weights = np.zeros((c, q))
    state = None
    batch = n if batch_size is None else min(batch_size, n)

    def objective(idx: np.ndarray, w: np.ndarray) -> tuple[float, np.ndarray]:
        logits = mean[idx] + phi[idx] @ w.T @ chol.T
        rows = np.arange(idx.size)
        loss = -float(np.mean(log_softmax(logits, axis=1)[rows, labels[idx]]))
        loss += l2_weight * float(np.sum(w**2))
        upstream = softmax(logits, axis=1)
        upstream[rows, labels[idx]] -= 1.0
        upstream /= idx.size
        grad = chol.T @ upstream.T @ phi[idx] + 2.0 * l2_weight * w
        return loss, grad

    everything = np.arange(n)
    trace: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(n) if batch < n else everything
        for start in range(0, n, batch):
            _, grad = objective(order[start : start + batch], weights)
            (weights,), state = adam_step([weights], [grad], state, lr=lr)
        loss, _ = objective(everything, weights)
        if not np.isfinite(loss):
            raise NonFiniteLossError(f"head adaptation diverged at epoch {epoch}")
        trace.append(loss)
        logger.debug("Head adaptation epoch", epoch=epoch, loss=loss)

    if body_hash(body) != digest:
        raise ArtifactError("frozen body changed during adaptation")
    logger.info("Head adapted", epochs=epochs, loss=trace[-1] if trace else None)
    return AdaptedHead(weights=weights, body=body, body_sha256=digest, loss_trace=trace)


def predict_adapted(head: AdaptedHead, features: np.ndarray) -> np.ndarray:
    """``softmax(mu(x) + L W Phi(x))`` at raw features, ``N x c``."""
    x = head.body.standardizer.transform_features(np.atleast_2d(features))
    return softmax(_adapted_logits(head.body, x, head.weights), axis=1)


def save_head(head: AdaptedHead, path: Path) -> str:
    return save_artifact(head.to_record(), path)


def load_head(path: Path, body: MultiDlfModel) -> AdaptedHead:
    """Load head weights and check they were fitted on ``body``."""
    record = load_artifact(path, HeadRecord)
    digest = body_hash(body)
    if record.body_sha256 != digest:
        raise ArtifactError(
            f"head {path} was fitted on body {record.body_sha256[:12]}, got {digest[:12]}"
        )
    weights = np.asarray(record.weights, dtype=np.float64)
    if weights.shape != (body.class_count, body.latent_dim):
        raise DimensionMismatchError(f"head weights {weights.shape} do not fit the body")
    return AdaptedHead(weights=weights, body=body, body_sha256=digest)
