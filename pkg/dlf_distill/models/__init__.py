"""Pydantic schemas and in-memory data containers."""

from .artifacts import (
    ARTIFACT_VERSION,
    DlfRecord,
    HeadRecord,
    InverseGammaRecord,
    MultiDlfRecord,
    NetworkRecord,
    StandardizerRecord,
    SynthTruthRecord,
    TeacherRecord,
)
from .config import (
    DesignStrategy,
    EmConfig,
    EmMode,
    ExperimentConfig,
    InitMethod,
    SynthKind,
    load_config,
)
from .dataset import Dataset, Standardizer, Task
from .network import Activation, NetworkSpec
from .report import MetricReport, MetricSummary, OodReport, ReliabilityBin

__all__ = [
    "ARTIFACT_VERSION",
    "Activation",
    "NetworkSpec",
    "Dataset",
    "Standardizer",
    "Task",
    "DesignStrategy",
    "EmConfig",
    "EmMode",
    "ExperimentConfig",
    "InitMethod",
    "SynthKind",
    "load_config",
    "NetworkRecord",
    "StandardizerRecord",
    "InverseGammaRecord",
    "TeacherRecord",
    "SynthTruthRecord",
    "DlfRecord",
    "MultiDlfRecord",
    "HeadRecord",
    "MetricReport",
    "MetricSummary",
    "OodReport",
    "ReliabilityBin",
]
