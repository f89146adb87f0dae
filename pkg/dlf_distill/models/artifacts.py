"""Serialized artifact records.

Every record carries ``version`` and a ``kind`` tag so a file handed to the
wrong subcommand fails loudly. Network weights are stored flat: for each
layer in order, the ``out x in`` weight matrix row-major followed by the
bias vector.
"""

from __future__ import annotations

from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from dlf_distill.models.dataset import Standardizer, Task
from dlf_distill.models.network import NetworkSpec

ARTIFACT_VERSION = 1


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid")


class StandardizerRecord(_Record):
    feature_mean: list[float]
    feature_scale: list[float]
    target_mean: float = 0.0
    target_scale: float = 1.0

    @classmethod
    def from_standardizer(cls, standardizer: Standardizer) -> StandardizerRecord:
        return cls(
            feature_mean=[float(v) for v in standardizer.feature_mean],
            feature_scale=[float(v) for v in standardizer.feature_scale],
            target_mean=float(standardizer.target_mean),
            target_scale=float(standardizer.target_scale),
        )

    def to_standardizer(self) -> Standardizer:
        return Standardizer(
            feature_mean=np.asarray(self.feature_mean, dtype=np.float64),
            feature_scale=np.asarray(self.feature_scale, dtype=np.float64),
            target_mean=self.target_mean,
            target_scale=self.target_scale,
        )


class NetworkRecord(_Record):
    spec: NetworkSpec
    weights: list[float]


class InverseGammaRecord(_Record):
    alpha: float = Field(gt=0.0)
    beta: float = Field(gt=0.0)


class TeacherRecord(_Record):
    """A trained teacher ensemble."""

    version: int = ARTIFACT_VERSION
    kind: Literal["teachers"] = "teachers"
    task: Task
    members: list[NetworkRecord] = Field(min_length=2)
    noise_vars: list[float] = Field(default_factory=list)
    class_count: int | None = None
    standardizer: StandardizerRecord


class DlfRecord(_Record):
    """A fitted univariate DLF student with its distilled noise model."""

    version: int = ARTIFACT_VERSION
    kind: Literal["dlf"] = "dlf"
    network: NetworkRecord
    log_jitter: float
    latent_dim: int = Field(ge=1)
    design_provenance: str
    design_points: list[list[float]] = Field(min_length=1)
    standardizer: StandardizerRecord
    noise: InverseGammaRecord | None = None


class MultiDlfRecord(_Record):
    """A fitted multivariate DLF student.

    ``chol_raw`` packs the lower triangle of the unconstrained factor row by
    row; its diagonal entries are stored before the softplus.
    """

    version: int = ARTIFACT_VERSION
    kind: Literal["multi-dlf"] = "multi-dlf"
    network: NetworkRecord
    chol_raw: list[float]
    log_jitter: float
    class_count: int = Field(ge=1)
    latent_dim: int = Field(ge=1)
    design_provenance: str
    design_points: list[list[float]] = Field(min_length=1)
    standardizer: StandardizerRecord


class HeadRecord(_Record):
    """Head weights adapted on shifted data, bound to a body by content hash."""

    version: int = ARTIFACT_VERSION
    kind: Literal["head"] = "head"
    body_sha256: str
    weights: list[list[float]]


class SynthTruthRecord(_Record):
    """Generating parameters of a synthetic dataset, kept for recovery checks."""

    version: int = ARTIFACT_VERSION
    kind: Literal["synth-truth"] = "synth-truth"
    synth_kind: str
    seed: int
    params: dict[str, Any]
    values: dict[str, Any] = Field(default_factory=dict)
