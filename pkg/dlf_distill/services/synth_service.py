"""Synthetic dataset generators with recorded ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from dlf_distill.core.errors import DistillError
from dlf_distill.core.logging import get_logger
from dlf_distill.core.network import forward_batch, init_params, make_spec
from dlf_distill.core.numerics import SeededRng
from dlf_distill.models.artifacts import SynthTruthRecord
from dlf_distill.models.config import SynthKind
from dlf_distill.models.dataset import Dataset, Task
from dlf_distill.models.network import Activation

logger = get_logger(__name__)


class InvalidParamsError(DistillError):
    """Generator parameters are unknown or out of range."""

    pass


LINEAR_DEFAULTS: dict[str, Any] = {
    "n": 200,
    "dim": 1,
    "slope": 2.0,
    "intercept": 0.0,
    "noise": 0.1,
    "low": -1.0,
    "high": 1.0,
}
DLF_GP_DEFAULTS: dict[str, Any] = {
    "m": 50,
    "n": 200,
    "q": 3,
    "dim": 1,
    "hidden": 16,
    "jitter": 0.01,
    "loading_scale": 1.0,
    "low": -2.0,
    "high": 2.0,
}
BLOBS_DEFAULTS: dict[str, Any] = {
    "n": 600,
    "classes": 3,
    "dim": 2,
    "radius": 3.0,
    "spread": 0.7,
    "offset": 0.0,
}

_DEFAULTS = {
    SynthKind.LINEAR_REGRESSION: LINEAR_DEFAULTS,
    SynthKind.DLF_GP: DLF_GP_DEFAULTS,
    SynthKind.BLOBS: BLOBS_DEFAULTS,
    SynthKind.FLIP_BLOBS: BLOBS_DEFAULTS,
}


@dataclass
class SynthResult:
    """Generated dataset plus the generating parameters."""

    dataset: Dataset
    truth: SynthTruthRecord
    arrays: dict[str, np.ndarray] = field(default_factory=dict)


def _resolve(kind: SynthKind, params: dict[str, Any] | None) -> dict[str, Any]:
    defaults = _DEFAULTS[kind]
    params = dict(params or {})
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        raise InvalidParamsError(f"unknown parameters for {kind.value}: {unknown}")
    resolved = {**defaults, **params}
    for key in ("n", "dim", "m", "q", "hidden"):
        if key in resolved and int(resolved[key]) < 1:
            raise InvalidParamsError(f"{key} must be >= 1, got {resolved[key]}")
    for key in ("noise", "spread"):
        if key in resolved and float(resolved[key]) < 0.0:
            raise InvalidParamsError(f"{key} must be >= 0, got {resolved[key]}")
    if "jitter" in resolved and float(resolved["jitter"]) <= 0.0:
        raise InvalidParamsError(f"jitter must be > 0, got {resolved['jitter']}")
    if "classes" in resolved and int(resolved["classes"]) < 2:
        raise InvalidParamsError(f"classes must be >= 2, got {resolved['classes']}")
    if "low" in resolved and float(resolved["low"]) >= float(resolved["high"]):
        raise InvalidParamsError("low must be below high")
    return resolved


def _linear(p: dict[str, Any], rng: SeededRng) -> tuple[Dataset, dict[str, np.ndarray]]:
    dim = int(p["dim"])
    slope = np.broadcast_to(np.asarray(p["slope"], dtype=np.float64), (dim,)).copy()
    x = rng.uniform(float(p["low"]), float(p["high"]), (int(p["n"]), dim))
    noise = float(p["noise"]) * rng.standard_normal(int(p["n"]), 1)[:, 0]
    y = x @ slope + float(p["intercept"]) + noise
    return Dataset(features=x, targets=y), {"slope": slope}


def _dlf_gp(p: dict[str, Any], rng: SeededRng) -> tuple[Dataset, dict[str, np.ndarray]]:
    m, n, q, dim = int(p["m"]), int(p["n"]), int(p["q"]), int(p["dim"])
    spec = make_spec(dim, [int(p["hidden"])], q + 1, Activation.TANH)
    params = init_params(spec, rng.spawn("network"))
    x = np.sort(rng.uniform(float(p["low"]), float(p["high"]), (m, dim)), axis=0)
    out = forward_batch(params, x)
    mean = out[:, 0]
    loading = float(p["loading_scale"]) * out[:, 1:]
    jitter = float(p["jitter"])

    z = rng.standard_normal(n, q)
    noise = np.sqrt(jitter) * rng.standard_normal(n, m)
    # one realization per column, m x n like a teacher prediction matrix
    realizations = (mean[None, :] + z @ loading.T + noise).T
    phi_phi_t = loading @ loading.T
    arrays = {
        "mean": mean,
        "loading": loading,
        "phi_phi_t": phi_phi_t,
        "covariance": phi_phi_t + jitter * np.eye(m),
        "realizations": realizations,
    }
    return Dataset(features=x, targets=realizations[:, 0]), arrays


def _blobs(
    p: dict[str, Any], rng: SeededRng, flip: bool
) -> tuple[Dataset, dict[str, np.ndarray]]:
    n, c, dim = int(p["n"]), int(p["classes"]), int(p["dim"])
    angles = 2.0 * np.pi * np.arange(c) / c
    centers = np.zeros((c, dim))
    centers[:, 0] = float(p["radius"]) * np.cos(angles)
    if dim > 1:
        centers[:, 1] = float(p["radius"]) * np.sin(angles)
    centers += float(p["offset"])

    labels = rng.permutation(n) % c
    x = centers[labels] + float(p["spread"]) * rng.standard_normal(n, dim)
    if flip:
        labels = c - 1 - labels
    dataset = Dataset(features=x, targets=labels, task=Task.CLASSIFICATION)
    return dataset, {"centers": centers}


def gen_synth(kind: SynthKind, params: dict[str, Any] | None = None, seed: int = 0) -> SynthResult:
    """
    Generate a reproducible synthetic dataset.

    ``flip-blobs`` has the same features as ``blobs`` for the same parameters
    and seed, with labels mapped ``y -> c - 1 - y``. For ``dlf-gp`` the features
    are the design points, the targets are the first realization and every
    realization is kept in ``arrays["realizations"]`` (``m x n``).

    Raises:
        InvalidParamsError: If a parameter is unknown or out of range
    """
    kind = SynthKind(kind)
    resolved = _resolve(kind, params)
    rng = SeededRng(seed)

    if kind is SynthKind.LINEAR_REGRESSION:
        dataset, arrays = _linear(resolved, rng)
    elif kind is SynthKind.DLF_GP:
        dataset, arrays = _dlf_gp(resolved, rng)
    else:
        dataset, arrays = _blobs(resolved, rng, flip=kind is SynthKind.FLIP_BLOBS)

    truth = SynthTruthRecord(
        synth_kind=kind.value,
        seed=seed,
        params=resolved,
        values={key: value.tolist() for key, value in arrays.items()},
    )
    logger.info("Synthetic data generated", kind=kind.value, rows=len(dataset), seed=seed)
    return SynthResult(dataset=dataset, truth=truth, arrays=arrays)
