"""Evaluation report schemas."""

from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from dlf_distill.models.artifacts import ARTIFACT_VERSION
from dlf_distill.models.dataset import Task

REGRESSION_METRICS = ("rmse", "nll", "crps", "coverage95")
CLASSIFICATION_METRICS = ("acc", "nll", "ece")


def metric_names(task: Task) -> tuple[str, ...]:
    return REGRESSION_METRICS if task is Task.REGRESSION else CLASSIFICATION_METRICS


class MetricSummary(BaseModel):
    """Mean and standard error of one metric across seeds."""

    model_config = ConfigDict(extra="forbid")

    mean: float
    stderr: float = Field(ge=0.0)

    @classmethod
    def from_values(cls, values: list[float]) -> MetricSummary:
        arr = np.asarray(values, dtype=np.float64)
        stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        return cls(mean=float(arr.mean()), stderr=stderr)


class ReliabilityBin(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lower: float
    upper: float
    count: int
    accuracy: float
    confidence: float


class MetricReport(BaseModel):
    """Teacher-ensemble and student metrics over one or more seeds.

    ``values`` maps ``"teacher"``/``"student"`` to metric name to one value per
    seed, in the order of ``seeds``. NLL is a per-point mean; multiply by
    ``n_test`` for the summed form.
    """

    model_config = ConfigDict(extra="forbid")

    version: int = ARTIFACT_VERSION
    kind: Literal["report"] = "report"
    task: Task
    seeds: list[int] = Field(min_length=1)
    n_test: int = Field(ge=1)
    values: dict[str, dict[str, list[float]]]
    summary: dict[str, dict[str, MetricSummary]] = Field(default_factory=dict)
    reliability: list[ReliabilityBin] = Field(default_factory=list)

    @classmethod
    def aggregate(cls, reports: list[MetricReport]) -> MetricReport:
        """Merge per-seed reports and fill in the mean/standard-error summary."""
        first = reports[0]
        values: dict[str, dict[str, list[float]]] = {}
        for source in first.values:
            values[source] = {
                name: [v for report in reports for v in report.values[source][name]]
                for name in first.values[source]
            }
        merged = cls(
            task=first.task,
            seeds=[seed for report in reports for seed in report.seeds],
            n_test=first.n_test,
            values=values,
        )
        return merged.summarized()

    def summarized(self) -> MetricReport:
        summary = {
            source: {name: MetricSummary.from_values(vals) for name, vals in metrics.items()}
            for source, metrics in self.values.items()
        }
        return self.model_copy(update={"summary": summary})


class OodReport(BaseModel):
    """Mutual-information OOD scores and their AUROC (OOD inputs as positives)."""

    model_config = ConfigDict(extra="forbid")

    version: int = ARTIFACT_VERSION
    kind: Literal["ood-report"] = "ood-report"
    auroc: float = Field(ge=0.0, le=1.0)
    samples: int = Field(ge=1)
    scores_in: list[float]
    scores_out: list[float]
