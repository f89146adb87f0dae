"""Command-line entry point for dlf-distill."""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from dlf_distill.core.config import get_settings
from dlf_distill.core.errors import DistillError
from dlf_distill.core.logging import get_logger, setup_logging
from dlf_distill.core.numerics import SeededRng
from dlf_distill.core.storage import ArtifactError, save_artifact
from dlf_distill.models.config import (
    DesignStrategy,
    EmMode,
    ExperimentConfig,
    InitMethod,
    SynthKind,
)
from dlf_distill.models.dataset import Task
from dlf_distill.services.dataset_service import load_csv, load_points, save_csv
from dlf_distill.services.dlf_service import DlfModel, sample_student_functions
from dlf_distill.services.metrics_service import accuracy
from dlf_distill.services.multi_dlf_service import MultiDlfModel, sample_member_probs
from dlf_distill.services.ood_service import ood_score
from dlf_distill.services.pipeline_service import (
    PipelineError,
    distill_student,
    evaluate_models,
    get_pipeline_service,
    load_student,
    report_table,
    stage,
    write_reliability_csv,
)
from dlf_distill.services.shift_service import fit_head, predict_adapted, save_head
from dlf_distill.services.synth_service import gen_synth
from dlf_distill.services.teacher_service import get_teacher_service

logger = get_logger(__name__)

# flag dest -> dotted ExperimentConfig field
OVERRIDES = {
    "q": "student.latent_dim",
    "penalty": "pretrain.penalty",
    "design": "design.strategy",
    "design_ratio": "design.ratio",
    "em_mode": "em.mode",
    "seeds": "seeds",
    "init": "pretrain.init",
    "output_dir": "output_dir",
}


def _parse_param(text: str) -> tuple[str, Any]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("experiment overrides")
    group.add_argument("--config", type=Path, help="experiment config JSON")
    group.add_argument("--q", type=int, help="latent dimension")
    group.add_argument("--lambda", dest="penalty", type=float, help="MMD penalty weight")
    group.add_argument("--design", choices=[s.value for s in DesignStrategy])
    group.add_argument("--design-ratio", type=float)
    group.add_argument("--em-mode", choices=[m.value for m in EmMode])
    group.add_argument("--seeds", type=int, nargs="+")
    group.add_argument("--init", choices=[i.value for i in InitMethod])
    group.add_argument("--output-dir", type=Path)


def _experiment_config(
    args: argparse.Namespace,
    data_path: Path | None = None,
    task: Task | None = None,
) -> ExperimentConfig:
    raw: dict[str, Any] = {}
    if args.config is not None:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if data_path is not None:
        raw["data_path"] = str(data_path)
        raw.pop("synthetic", None)
    if task is not None:
        raw["task"] = task.value
    config = ExperimentConfig.model_validate(raw)
    overrides = {field: getattr(args, dest, None) for dest, field in OVERRIDES.items()}
    if overrides["output_dir"] is not None:
        overrides["output_dir"] = str(overrides["output_dir"])
    return config.with_overrides(**overrides)


def cmd_gen_synth(args: argparse.Namespace) -> None:
    with stage("gen-synth"):
        result = gen_synth(SynthKind(args.kind), dict(args.param), args.seed)
        save_csv(result.dataset, args.out)
        truth_path = args.truth or args.out.with_suffix(".truth.json")
        save_artifact(result.truth, truth_path)
    print(f"wrote {len(result.dataset)} rows to {args.out}, truth to {truth_path}")


def cmd_train_teachers(args: argparse.Namespace) -> None:
    task = Task(args.task)
    with stage("config"):
        config = _experiment_config(args, args.data, task)
    with stage("load"):
        dataset = load_csv(args.data, task)
    with stage("teachers"):
        class_count = dataset.class_count if task is Task.CLASSIFICATION else None
        service = get_teacher_service()
        ensemble = service.train(
            dataset, config.teacher, SeededRng(args.seed).spawn("teachers"), class_count
        )
        digest = service.save(ensemble, args.out)
    print(f"wrote {ensemble.size} teachers to {args.out} ({digest[:12]})")


def cmd_distill(args: argparse.Namespace) -> None:
    with stage("load"):
        ensemble = get_teacher_service().load(args.teachers)
        pool = load_csv(args.data, ensemble.task)
    with stage("config"):
        config = _experiment_config(args, args.data, ensemble.task)
    with stage("distill"):
        outcome = distill_student(ensemble, pool.features, config, SeededRng(args.seed))
        digest = save_artifact(outcome.student.to_record(), args.out)
    print(
        f"wrote student to {args.out} ({digest[:12]}), "
        f"final log-likelihood {outcome.loglik_trace[-1]:.6g}"
    )


def cmd_evaluate(args: argparse.Namespace) -> None:
    with stage("load"):
        ensemble = get_teacher_service().load(args.teachers)
        student = load_student(args.student)
        test = load_csv(args.data, ensemble.task)
    with stage("config"):
        config = _experiment_config(args, args.data, ensemble.task)
    with stage("evaluate"):
        report = evaluate_models(
            ensemble, student, test, config, args.seed, SeededRng(args.seed).spawn("evaluate")
        )
        save_artifact(report, args.out)
        if args.csv is not None:
            report_table(report).to_csv(args.csv, index=False, float_format="%.17g")
        if args.reliability is not None and report.reliability:
            write_reliability_csv(report.reliability, args.reliability)
    for source, metrics in report.summary.items():
        values = ", ".join(f"{name}={summary.mean:.6g}" for name, summary in metrics.items())
        print(f"{source}: {values}")


def cmd_sample(args: argparse.Namespace) -> None:
    with stage("load"):
        student = load_student(args.student)
        raw_points = load_points(args.points)
    with stage("sample"):
        rng = SeededRng(args.seed)
        n = raw_points.shape[0]
        if isinstance(student, DlfModel):
            points = student.standardizer.transform_features(raw_points)
            draws = sample_student_functions(student, points, args.count, rng, args.include_jitter)
            values = student.standardizer.inverse_targets(draws.T).reshape(-1, 1)
            columns = ["f"]
        else:
            probs = sample_member_probs(student, raw_points, args.count, rng)
            values = probs.reshape(n * args.count, -1)
            columns = [f"p{k}" for k in range(student.class_count)]
        frame = pd.DataFrame(values, columns=columns)
        frame.insert(0, "sample", np.tile(np.arange(args.count), n))
        frame.insert(0, "point", np.repeat(np.arange(n), args.count))
        args.out.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.out, index=False, float_format="%.17g")
    print(f"wrote {args.count} samples at {n} points to {args.out}")


def _multi_student(path: Path) -> MultiDlfModel:
    student = load_student(path)
    if not isinstance(student, MultiDlfModel):
        raise ArtifactError(f"{path} is not a classification student")
    return student


def cmd_shift_adapt(args: argparse.Namespace) -> None:
    with stage("load"):
        body = _multi_student(args.student)
        data = load_csv(args.data, Task.CLASSIFICATION)
    with stage("adapt"):
        head = fit_head(body, data, args.epochs, args.lr, SeededRng(args.seed))
        digest = save_head(head, args.out)
    print(f"wrote head to {args.out} ({digest[:12]}), final loss {head.loss_trace[-1]:.6g}")
    if args.test is not None:
        with stage("evaluate"):
            test = load_csv(args.test, Task.CLASSIFICATION)
            acc = accuracy(predict_adapted(head, test.features), test.targets)
        print(f"adapted accuracy {acc:.4f}")


def cmd_ood_score(args: argparse.Namespace) -> None:
    with stage("load"):
        model = _multi_student(args.student)
        in_features = load_csv(args.in_data, Task.CLASSIFICATION).features
        out_features = load_csv(args.out_data, Task.CLASSIFICATION).features
    with stage("ood"):
        report = ood_score(model, in_features, out_features, args.samples, SeededRng(args.seed))
        save_artifact(report, args.out)
    print(f"AUROC {report.auroc:.4f}")


def cmd_run(args: argparse.Namespace) -> None:
    with stage("config"):
        config = _experiment_config(args, args.data, Task(args.task) if args.task else None)
    result = get_pipeline_service().run(config, args.output_dir)
    print(f"wrote {len(result.seed_reports)} seed report(s) and {result.aggregate_path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlf-distill",
        description="Distill deep ensembles into deep latent factor Gaussian-process students.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    seed_default = get_settings().default_seed

    p = sub.add_parser("gen-synth", help="generate a synthetic dataset")
    p.add_argument("--kind", required=True, choices=[k.value for k in SynthKind])
    p.add_argument("--param", type=_parse_param, action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--truth", type=Path, help="ground-truth JSON (default: next to --out)")
    p.set_defaults(handler=cmd_gen_synth)

    p = sub.add_parser("train-teachers", help="train a deep ensemble")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--task", choices=[t.value for t in Task], default=Task.REGRESSION.value)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--out", type=Path, required=True)
    _add_experiment_flags(p)
    p.set_defaults(handler=cmd_train_teachers)

    p = sub.add_parser("distill", help="distill a teacher ensemble into a student")
    p.add_argument("--teachers", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="design pool CSV")
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--out", type=Path, required=True)
    _add_experiment_flags(p)
    p.set_defaults(handler=cmd_distill)

    p = sub.add_parser("evaluate", help="score teachers and student on a test CSV")
    p.add_argument("--teachers", type=Path, required=True)
    p.add_argument("--student", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--csv", type=Path, help="metric table CSV")
    p.add_argument("--reliability", type=Path, help="reliability bins CSV")
    _add_experiment_flags(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("sample", help="draw student functions at given points")
    p.add_argument("--student", type=Path, required=True)
    p.add_argument("--points", type=Path, required=True, help="feature-only CSV")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--include-jitter", action="store_true")
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("shift-adapt", help="fit a new head on a frozen classification student")
    p.add_argument("--student", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--test", type=Path, help="labelled CSV to report adapted accuracy on")
    p.set_defaults(handler=cmd_shift_adapt)

    p = sub.add_parser("ood-score", help="mutual-information OOD AUROC")
    p.add_argument("--student", type=Path, required=True)
    p.add_argument("--in", dest="in_data", type=Path, required=True)
    p.add_argument("--out-data", type=Path, required=True)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_ood_score)

    p = sub.add_parser("run", help="full pipeline for every configured seed")
    p.add_argument("--data", type=Path, help="CSV dataset (overrides the config's data source)")
    p.add_argument("--task", choices=[t.value for t in Task])
    _add_experiment_flags(p)
    p.set_defaults(handler=cmd_run)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand; 0 on success, 1 on a stage-labelled failure."""
    setup_logging()
    args = build_parser().parse_args(argv)
    handler: Callable[[argparse.Namespace], None] = args.handler
    try:
        handler(args)
    except PipelineError as exc:
        logger.error("Command failed", command=args.command, stage=exc.stage, error=str(exc.cause))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DistillError as exc:
        logger.error("Command failed", command=args.command, error=str(exc))
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
