"""Out-of-distribution scoring with the classification student."""

from __future__ import annotations

import numpy as np

from dlf_distill.core.errors import EmptyDataError
from dlf_distill.core.logging import get_logger
from dlf_distill.core.numerics import SeededRng
from dlf_distill.models.report import OodReport
from dlf_distill.services.metrics_service import auroc, mutual_information_batch
from dlf_distill.services.multi_dlf_service import MultiDlfModel, sample_member_probs

logger = get_logger(__name__)


def mi_scores(model: MultiDlfModel, features: np.ndarray, samples: int, rng: SeededRng) -> np.ndarray:
    """Mutual information of ``samples`` student members at each raw input."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[0] == 0:
        raise EmptyDataError("no inputs to score")
    return mutual_information_batch(sample_member_probs(model, features, samples, rng))


def ood_score(
    model: MultiDlfModel,
    in_features: np.ndarray,
    out_features: np.ndarray,
    samples: int,
    rng: SeededRng,
) -> OodReport:
    """
    AUROC of mutual-information scores, OOD inputs as the positive class.

    In- and out-of-distribution inputs draw from separate sub-streams of
    ``rng`` so adding inputs to one set leaves the other's scores unchanged.

    Raises:
        EmptyDataError: If either input set is empty
    """
    scores_in = mi_scores(model, in_features, samples, rng.spawn("in"))
    scores_out = mi_scores(model, out_features, samples, rng.spawn("out"))
    value = auroc(scores_in, scores_out)
    logger.info(
        "OOD scores computed",
        auroc=value,
        n_in=scores_in.size,
        n_out=scores_out.size,
        samples=samples,
    )
    return OodReport(
        auroc=value,
        samples=samples,
        scores_in=scores_in.tolist(),
        scores_out=scores_out.tolist(),
    )
