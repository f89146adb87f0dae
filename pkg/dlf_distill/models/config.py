"""Experiment configuration schema.

An ``ExperimentConfig`` is loaded from JSON (``--config``) and can be
overridden field by field from the command line.
"""

from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator

from dlf_distill.models.dataset import Task
from dlf_distill.models.network import Activation

DEFAULT_LATENT_DIM = {Task.REGRESSION: 10, Task.CLASSIFICATION: 8}


class DesignStrategy(str, Enum):
    """Where design points come from."""

    TEACHER_TRAIN = "teacher-train"
    TEACHER_MIXUP = "teacher-mixup"
    NEW_TRAIN = "new-train"
    NEW_MIXUP = "new-mixup"

    @property
    def uses_mixup(self) -> bool:
        return self in (DesignStrategy.TEACHER_MIXUP, DesignStrategy.NEW_MIXUP)

    @property
    def uses_new_data(self) -> bool:
        return self in (DesignStrategy.NEW_TRAIN, DesignStrategy.NEW_MIXUP)


class EmMode(str, Enum):
    """Mini-batch EM as in the reference algorithm, or exact full-design EM."""

    MINI_BATCH = "minibatch"
    FULL_BATCH = "fullbatch"


class InitMethod(str, Enum):
    """Starting point for EM."""

    MMD = "mmd"
    RANDOM = "random"


class SynthKind(str, Enum):
    """Synthetic dataset generators."""

    LINEAR_REGRESSION = "linear-regression"
    DLF_GP = "dlf-gp"
    BLOBS = "blobs"
    FLIP_BLOBS = "flip-blobs"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TeacherConfig(_Section):
    hidden_layers: list[int] = Field(default_factory=lambda: [100, 100])
    activation: Activation = Activation.RELU
    count: int = Field(default=10, ge=2)
    epochs: int = Field(default=200, ge=0)
    lr: float = Field(default=1e-3, gt=0.0)
    batch_size: int | None = Field(default=32, ge=1)


class StudentConfig(_Section):
    hidden_layers: list[int] = Field(default_factory=lambda: [50])
    activation: Activation = Activation.RELU
    latent_dim: int | None = Field(default=None, ge=1)


class PretrainConfig(_Section):
    init: InitMethod = InitMethod.MMD
    penalty: float = Field(default=1.0, ge=0.0)
    epochs: int = Field(default=200, ge=0)
    lr: float = Field(default=1e-3, gt=0.0)
    bandwidth: float | None = Field(default=None, gt=0.0)


class EmConfig(_Section):
    mode: EmMode = EmMode.MINI_BATCH
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=100, ge=0)
    lr: float = Field(default=1e-3, gt=0.0)
    tol: float = Field(default=1e-6, gt=0.0)
    gem_guard: bool = False
    max_backtracks: int = Field(default=8, ge=0)
    train_chol_factor: bool = True


class DesignConfig(_Section):
    strategy: DesignStrategy = DesignStrategy.TEACHER_TRAIN
    ratio: float = Field(default=1.0, gt=0.0, le=1.0)


class EvaluationConfig(_Section):
    samples: int | None = Field(default=None, ge=1)
    ece_bins: int = Field(default=15, ge=1)
    include_jitter: bool = False
    write_csv: bool = True


class SynthConfig(_Section):
    kind: SynthKind
    params: dict[str, Any] = Field(default_factory=dict)


class ExperimentConfig(_Section):
    """Everything one pipeline run needs."""

    task: Task = Task.REGRESSION
    data_path: Path | None = None
    synthetic: SynthConfig | None = None
    train_ratio: float = Field(default=0.9, gt=0.0, lt=1.0)
    teacher: TeacherConfig = Field(default_factory=TeacherConfig)
    student: StudentConfig = Field(default_factory=StudentConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    em: EmConfig = Field(default_factory=EmConfig)
    design: DesignConfig = Field(default_factory=DesignConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    output_dir: Path | None = None

    @model_validator(mode="after")
    def _one_data_source(self) -> ExperimentConfig:
        if (self.data_path is None) == (self.synthetic is None):
            raise ValueError("exactly one of data_path and synthetic must be set")
        return self

    @property
    def latent_dim(self) -> int:
        return self.student.latent_dim or DEFAULT_LATENT_DIM[self.task]

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        """Apply dotted-path overrides such as ``{"em.mode": "fullbatch"}``."""
        data = self.model_dump(mode="json")
        for dotted, value in overrides.items():
            if value is None:
                continue
            node = data
            *parents, leaf = dotted.split(".")
            for key in parents:
                node = node.setdefault(key, {})
            node[leaf] = value
        return ExperimentConfig.model_validate(data)


def load_config(path: Path) -> ExperimentConfig:
    """Parse an ``ExperimentConfig`` JSON file."""
    return ExperimentConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))
