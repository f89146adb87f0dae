"""End-to-end teacher -> design -> pretrain -> EM -> noise -> evaluate workflow.

Every stage draws from its own named child of the seed's ``SeededRng`` so a
stage can be rerun on its own and reproduce the same numbers.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from dlf_distill.core.config import get_settings
from dlf_distill.core.errors import DistillError
from dlf_distill.core.logging import get_logger, run_context
from dlf_distill.core.numerics import SeededRng
from dlf_distill.core.storage import ArtifactError, peek_kind, save_artifact
from dlf_distill.models.config import DesignStrategy, EmConfig, ExperimentConfig, InitMethod
from dlf_distill.models.dataset import Dataset, Task
from dlf_distill.models.report import MetricReport, ReliabilityBin, metric_names
from dlf_distill.services.dataset_service import load_csv, split
from dlf_distill.services.design_service import select_design
from dlf_distill.services.dlf_service import (
    DlfModel,
    em_fit,
    init_model,
    load_model,
    mmd_pretrain,
    predictive_mixture,
)
from dlf_distill.services.metrics_service import (
    PredictiveMixture,
    accuracy,
    coverage95,
    crps_mixture,
    ece,
    nll_classification,
    nll_regression,
    reliability_bins,
    rmse,
)
from dlf_distill.services.multi_dlf_service import (
    MultiDlfModel,
    em_fit_multi,
    init_multi_model,
    load_multi_model,
    mmd_pretrain_multi,
    predictive_probs,
)
from dlf_distill.services.noise_service import distill_noise
from dlf_distill.services.synth_service import gen_synth
from dlf_distill.services.teacher_service import (
    TeacherEnsemble,
    get_teacher_service,
    prediction_matrix,
    teacher_member_probs,
    teacher_predictive,
)

logger = get_logger(__name__)

Student = DlfModel | MultiDlfModel


class PipelineError(DistillError):
    """A module error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: Exception) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


@contextmanager
def stage(name: str, seed: int | None = None) -> Iterator[None]:
    """Label any module error raised inside the block with ``name``."""
    with run_context(stage=name, seed=seed):
        logger.info("Pipeline stage started")
        try:
            yield
        except PipelineError:
            raise
        except (DistillError, ValueError, OSError) as exc:
            logger.error("Pipeline stage failed", error=str(exc))
            raise PipelineError(name, exc) from exc


@dataclass
class DistillOutcome:
    """Fitted student plus the EM and pretraining diagnostics."""

    student: Student
    loglik_trace: list[float] = field(default_factory=list)
    initial_mmd: float | None = None
    final_mmd: float | None = None


@dataclass
class SeedRun:
    ensemble: TeacherEnsemble
    outcome: DistillOutcome
    report: MetricReport
    test: Dataset


def load_experiment_data(config: ExperimentConfig, seed: int) -> Dataset:
    """The CSV named by the config, or its synthetic dataset generated with ``seed``."""
    if config.data_path is not None:
        return load_csv(config.data_path, config.task)
    assert config.synthetic is not None
    dataset = gen_synth(config.synthetic.kind, config.synthetic.params, seed).dataset
    if dataset.task is not config.task:
        raise ValueError(
            f"synthetic kind {config.synthetic.kind.value} yields {dataset.task.value} data, "
            f"config task is {config.task.value}"
        )
    return dataset


def partition_train(
    train: Dataset, config: ExperimentConfig, rng: SeededRng
) -> tuple[Dataset, Dataset]:
    """
    Teacher-training part and design pool.

    ``new-*`` strategies halve the training split so that teachers never see
    the design pool; ``teacher-*`` strategies use the whole split for both.
    """
    if not config.design.strategy.uses_new_data:
        return train, train
    if len(train) < 2:
        raise ValueError("new-* design strategies need at least 2 training rows")
    order = rng.permutation(len(train))
    half = len(train) // 2
    return train.subset(order[:half]), train.subset(order[half:])


def _clamped_em(config: EmConfig, design_size: int) -> EmConfig:
    if config.batch_size <= design_size:
        return config
    logger.info("EM batch clamped to design size", batch_size=config.batch_size, design=design_size)
    return config.model_copy(update={"batch_size": design_size})


def distill_student(
    ensemble: TeacherEnsemble,
    pool_features: np.ndarray,
    config: ExperimentConfig,
    rng: SeededRng,
) -> DistillOutcome:
    """
    Select design points from the raw pool, then pretrain and EM-fit a student.

    Regression students also get the inverse-gamma fit of the teacher noise
    variances; classification students are fitted on raw logits.
    """
    pool = ensemble.standardizer.transform_features(np.atleast_2d(pool_features))
    design = select_design(pool, config.design.strategy, config.design.ratio, rng.spawn("design"))
    pred = prediction_matrix(ensemble, design.points)
    em_config = _clamped_em(config.em, design.size)
    student_cfg, pretrain_cfg = config.student, config.pretrain
    use_mmd = pretrain_cfg.init is InitMethod.MMD

    if ensemble.task is Task.REGRESSION:
        model = init_model(
            design,
            ensemble.standardizer,
            config.latent_dim,
            pred,
            rng.spawn("init"),
            student_cfg.hidden_layers,
            student_cfg.activation,
        )
        outcome = DistillOutcome(student=model)
        if use_mmd:
            pretrained = mmd_pretrain(
                model,
                pred,
                pretrain_cfg.penalty,
                pretrain_cfg.epochs,
                rng.spawn("pretrain"),
                pretrain_cfg.lr,
                pretrain_cfg.bandwidth,
            )
            model = pretrained.model
            outcome.initial_mmd, outcome.final_mmd = pretrained.initial_mmd, pretrained.final_mmd
        result = em_fit(model, pred, em_config, rng.spawn("em"))
        outcome.student = dataclasses.replace(
            result.model, noise=distill_noise(ensemble.noise_vars)
        )
        outcome.loglik_trace = result.loglik_trace
        return outcome

    assert ensemble.class_count is not None
    multi = init_multi_model(
        design,
        ensemble.standardizer,
        ensemble.class_count,
        config.latent_dim,
        pred,
        rng.spawn("init"),
        student_cfg.hidden_layers,
        student_cfg.activation,
    )
    outcome = DistillOutcome(student=multi)
    if use_mmd:
        pretrained_multi = mmd_pretrain_multi(
            multi,
            pred,
            pretrain_cfg.penalty,
            pretrain_cfg.epochs,
            rng.spawn("pretrain"),
            pretrain_cfg.lr,
            pretrain_cfg.bandwidth,
        )
        multi = pretrained_multi.model
        outcome.initial_mmd = pretrained_multi.initial_mmd
        outcome.final_mmd = pretrained_multi.final_mmd
    multi_result = em_fit_multi(multi, pred, em_config, rng.spawn("em"))
    outcome.student = multi_result.model
    outcome.loglik_trace = multi_result.loglik_trace
    return outcome


def _regression_metrics(mixture: PredictiveMixture, targets: np.ndarray) -> dict[str, float]:
    return {
        "rmse": rmse(mixture.mean(), targets),
        "nll": nll_regression(mixture, targets),
        "crps": float(np.mean(crps_mixture(mixture, targets))),
        "coverage95": coverage95(mixture, targets),
    }


def _classification_metrics(probs: np.ndarray, labels: np.ndarray, bins: int) -> dict[str, float]:
    return {
        "acc": accuracy(probs, labels),
        "nll": nll_classification(probs, labels),
        "ece": ece(probs, labels, bins),
    }


def evaluate_models(
    ensemble: TeacherEnsemble,
    student: Student,
    test: Dataset,
    config: ExperimentConfig,
    seed: int,
    rng: SeededRng,
) -> MetricReport:
    """
    Teacher-ensemble and student metrics on ``test`` for one seed.

    The student uses ``evaluation.samples`` sampled members, defaulting to
    the ensemble size.
    """
    samples = config.evaluation.samples or ensemble.size
    labels = test.targets
    reliability: list[ReliabilityBin] = []
    if isinstance(student, DlfModel):
        teacher = _regression_metrics(teacher_predictive(ensemble, test.features), labels)
        mixture = predictive_mixture(
            student,
            test.features,
            samples,
            rng,
            include_jitter=config.evaluation.include_jitter,
        )
        student_values = _regression_metrics(mixture, labels)
    else:
        bins = config.evaluation.ece_bins
        teacher_probs = teacher_member_probs(ensemble, test.features).mean(axis=1)
        teacher = _classification_metrics(teacher_probs, labels, bins)
        probs = predictive_probs(student, test.features, samples, rng)
        student_values = _classification_metrics(probs, labels, bins)
        reliability = reliability_bins(probs, labels, bins)

    names = metric_names(test.task)
    return MetricReport(
        task=test.task,
        seeds=[seed],
        n_test=len(test),
        values={
            "teacher": {name: [teacher[name]] for name in names},
            "student": {name: [student_values[name]] for name in names},
        },
        reliability=reliability,
    ).summarized()


def report_table(report: MetricReport) -> pd.DataFrame:
    """One row per source with ``<metric>_mean`` and ``<metric>_stderr`` columns."""
    rows = []
    for source, metrics in report.summary.items():
        row: dict[str, object] = {"source": source, "seeds": len(report.seeds)}
        for name, summary in metrics.items():
            row[f"{name}_mean"] = summary.mean
            row[f"{name}_stderr"] = summary.stderr
        rows.append(row)
    return pd.DataFrame(rows)


def write_reliability_csv(bins: list[ReliabilityBin], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([b.model_dump() for b in bins]).to_csv(path, index=False, float_format="%.17g")


def load_student(path: Path) -> Student:
    """Load a univariate or multivariate student by its artifact kind."""
    kind = peek_kind(path)
    if kind == "dlf":
        return load_model(path)
    if kind == "multi-dlf":
        return load_multi_model(path)
    raise ArtifactError(f"artifact {path} of kind {kind!r} is not a student model")


def run_seed(config: ExperimentConfig, seed: int) -> SeedRun:
    """All stages for a single seed, without writing anything."""
    rng = SeededRng(seed)
    with stage("load", seed):
        dataset = load_experiment_data(config, seed)
    with stage("split", seed):
        train, test = split(dataset, config.train_ratio, seed)
        teacher_part, pool = partition_train(train, config, rng.spawn("split"))
    with stage("teachers", seed):
        class_count = dataset.class_count if config.task is Task.CLASSIFICATION else None
        ensemble = get_teacher_service().train(
            teacher_part, config.teacher, rng.spawn("teachers"), class_count
        )
    with stage("distill", seed):
        outcome = distill_student(ensemble, pool.features, config, rng)
    with stage("evaluate", seed):
        report = evaluate_models(ensemble, outcome.student, test, config, seed, rng.spawn("evaluate"))
    return SeedRun(ensemble=ensemble, outcome=outcome, report=report, test=test)


@dataclass
class PipelineResult:
    aggregate: MetricReport
    seed_reports: list[Path] = field(default_factory=list)
    aggregate_path: Path | None = None


class PipelineService:
    """Runs the full workflow for every configured seed and writes the reports."""

    def run(self, config: ExperimentConfig, output_dir: Path | None = None) -> PipelineResult:
        """
        Execute every stage for each seed.

        Writes ``seed-<s>/{teachers,student,report}.json`` per seed and the
        aggregated ``report.json`` (plus ``report.csv`` when enabled) under
        ``output_dir``, falling back to ``config.output_dir`` and then the
        ``DLF_OUTPUT_DIR`` setting.

        Raises:
            PipelineError: Wrapping the first module error, labelled with its stage
        """
        root = Path(output_dir or config.output_dir or get_settings().output_dir)
        write_csv = config.evaluation.write_csv
        reports: list[MetricReport] = []
        paths: list[Path] = []
        for seed in config.seeds:
            run = run_seed(config, seed)
            seed_dir = root / f"seed-{seed}"
            with stage("write", seed):
                get_teacher_service().save(run.ensemble, seed_dir / "teachers.json")
                save_artifact(run.outcome.student.to_record(), seed_dir / "student.json")
                save_artifact(run.report, seed_dir / "report.json")
                if write_csv and run.report.reliability:
                    write_reliability_csv(run.report.reliability, seed_dir / "reliability.csv")
            reports.append(run.report)
            paths.append(seed_dir / "report.json")

        aggregate = MetricReport.aggregate(reports)
        aggregate_path = root / "report.json"
        with stage("write"):
            save_artifact(aggregate, aggregate_path)
            if write_csv:
                report_table(aggregate).to_csv(
                    root / "report.csv", index=False, float_format="%.17g"
                )
        logger.info("Pipeline finished", seeds=list(config.seeds), output_dir=str(root))
        return PipelineResult(aggregate=aggregate, seed_reports=paths, aggregate_path=aggregate_path)


def get_pipeline_service() -> PipelineService:
    """Get an instance of PipelineService."""
    return PipelineService()


def run_pipeline(config: ExperimentConfig, output_dir: Path | None = None) -> PipelineResult:
    """Run every seed of ``config`` and write the per-seed and aggregate reports."""
    return get_pipeline_service().run(config, output_dir)


ABLATION_KNOBS: dict[str, tuple[object, ...]] = {
    "student.latent_dim": (2, 10, 30),
    "design.strategy": tuple(s.value for s in DesignStrategy),
    "design.ratio": (0.2, 1.0),
    "pretrain.init": tuple(i.value for i in InitMethod),
    "pretrain.penalty": (0.0, 1.0, 10.0),
    "teacher.count": (2, 5, 10),
    "student.hidden_layers": ([50], [100], [50, 50]),
}


def _knob_label(value: object) -> str:
    if isinstance(value, list | tuple):
        return "x".join(str(v) for v in value)
    return str(value)


def ablation_configs(
    base: ExperimentConfig,
    knobs: dict[str, tuple[object, ...]] | None = None,
) -> list[tuple[str, ExperimentConfig]]:
    """
    One-knob-at-a-time variants of ``base``, labelled ``<field>=<value>``.

    Each knob is swept with every other field left at its ``base`` value.
    """
    variants = []
    for dotted, values in (knobs or ABLATION_KNOBS).items():
        for value in values:
            label = f"{dotted}={_knob_label(value)}"
            variants.append((label, base.with_overrides(**{dotted: value})))
    return variants
