"""In-memory datasets and the z-score standardizer."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from dlf_distill.core.errors import DimensionMismatchError


class Task(str, Enum):
    """Prediction task of a dataset and the models built on it."""

    REGRESSION = "regression"
    CLASSIFICATION = "classification"


@dataclass
class Dataset:
    """Feature matrix with one target per row.

    Classification targets are integer class indices in ``[0, c)``.
    """

    features: np.ndarray
    targets: np.ndarray
    column_names: list[str] = field(default_factory=list)
    task: Task = Task.REGRESSION

    def __post_init__(self) -> None:
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        dtype = np.int64 if self.task is Task.CLASSIFICATION else np.float64
        self.targets = np.asarray(self.targets).astype(dtype).ravel()
        if self.features.shape[0] != self.targets.size:
            raise DimensionMismatchError(
                f"{self.features.shape[0]} feature rows but {self.targets.size} targets"
            )
        if not self.column_names:
            self.column_names = [f"x{j}" for j in range(self.dim)] + ["y"]

    def __len__(self) -> int:
        return int(self.targets.size)

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def class_count(self) -> int:
        return int(self.targets.max()) + 1 if len(self) else 0

    def subset(self, index: np.ndarray) -> Dataset:
        return Dataset(
            features=self.features[index],
            targets=self.targets[index],
            column_names=list(self.column_names),
            task=self.task,
        )


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-column z-score transform fitted on training statistics.

    For classification the target mean/scale stay at 0/1 so logits are untouched.
    """

    feature_mean: np.ndarray
    feature_scale: np.ndarray
    target_mean: float = 0.0
    target_scale: float = 1.0

    @classmethod
    def fit(cls, features: np.ndarray, targets: np.ndarray | None = None) -> Standardizer:
        features = np.asarray(features, dtype=np.float64)
        scale = features.std(axis=0)
        scale = np.where(scale > 0.0, scale, 1.0)
        if targets is None:
            return cls(feature_mean=features.mean(axis=0), feature_scale=scale)
        targets = np.asarray(targets, dtype=np.float64)
        target_scale = float(targets.std())
        return cls(
            feature_mean=features.mean(axis=0),
            feature_scale=scale,
            target_mean=float(targets.mean()),
            target_scale=target_scale if target_scale > 0.0 else 1.0,
        )

    @classmethod
    def identity(cls, dim: int) -> Standardizer:
        return cls(feature_mean=np.zeros(dim), feature_scale=np.ones(dim))

    def transform_features(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.feature_mean) / self.feature_scale

    def inverse_features(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) * self.feature_scale + self.feature_mean

    def transform_targets(self, targets: np.ndarray) -> np.ndarray:
        return (np.asarray(targets, dtype=np.float64) - self.target_mean) / self.target_scale

    def inverse_targets(self, targets: np.ndarray) -> np.ndarray:
        return np.asarray(targets, dtype=np.float64) * self.target_scale + self.target_mean

    def inverse_variances(self, variances: np.ndarray) -> np.ndarray:
        return np.asarray(variances, dtype=np.float64) * self.target_scale**2
