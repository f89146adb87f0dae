"""Domain services - Teachers, design points, DLF students, noise, metrics, adaptation, OOD, and the pipeline."""

from .dataset_service import (
    DatasetError,
    EmptyFileError,
    MissingValueError,
    ParseError,
    TooFewRowsError,
    load_csv,
    load_points,
    save_csv,
    split,
)
from .design_service import DesignSet, EmptyPoolError, mixup_samples, select_design
from .dlf_service import (
    DlfModel,
    PretrainResult,
    SingularPrecisionError,
    e_step,
    em_fit,
    init_model,
    mmd_pretrain,
    predictive_mixture,
    q_objective,
    sample_student_functions,
)
from .em_engine import EmResult, run_em
from .metrics_service import (
    InvalidSimplexError,
    MetricsError,
    NonPositiveVarianceError,
    PredictiveMixture,
)
from .multi_dlf_service import (
    MultiDlfModel,
    e_step_vec,
    em_fit_multi,
    init_multi_model,
    mmd_pretrain_multi,
    predictive_probs,
    q_objective_vec,
    vec_observation_law,
)
from .noise_service import (
    DegenerateSamplesError,
    InverseGammaParams,
    NoiseError,
    NonPositiveSampleError,
    distill_noise,
    fit_inverse_gamma,
)
from .ood_service import ood_score
from .pipeline_service import (
    PipelineError,
    PipelineService,
    get_pipeline_service,
    run_pipeline,
)
from .shift_service import AdaptedHead, fit_head, predict_adapted
from .synth_service import InvalidParamsError, SynthResult, gen_synth
from .teacher_service import TeacherEnsemble, TeacherService, get_teacher_service

__all__ = [
    "AdaptedHead",
    "DatasetError",
    "DegenerateSamplesError",
    "DesignSet",
    "DlfModel",
    "EmResult",
    "EmptyFileError",
    "EmptyPoolError",
    "InvalidParamsError",
    "InvalidSimplexError",
    "InverseGammaParams",
    "MetricsError",
    "MissingValueError",
    "MultiDlfModel",
    "NoiseError",
    "NonPositiveSampleError",
    "NonPositiveVarianceError",
    "ParseError",
    "PipelineError",
    "PipelineService",
    "PredictiveMixture",
    "PretrainResult",
    "SingularPrecisionError",
    "SynthResult",
    "TeacherEnsemble",
    "TeacherService",
    "TooFewRowsError",
    "e_step",
    "e_step_vec",
    "em_fit",
    "em_fit_multi",
    "fit_head",
    "distill_noise",
    "fit_inverse_gamma",
    "gen_synth",
    "get_pipeline_service",
    "run_pipeline",
    "get_teacher_service",
    "init_model",
    "init_multi_model",
    "load_csv",
    "load_points",
    "mixup_samples",
    "mmd_pretrain",
    "mmd_pretrain_multi",
    "ood_score",
    "predict_adapted",
    "predictive_mixture",
    "predictive_probs",
    "q_objective",
    "q_objective_vec",
    "run_em",
    "sample_student_functions",
    "save_csv",
    "select_design",
    "split",
    "vec_observation_law",
]
