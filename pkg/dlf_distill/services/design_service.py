"""Design-point selection: pool subsampling and mixup."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dlf_distill.core.errors import DimensionMismatchError, DistillError
from dlf_distill.core.logging import get_logger
from dlf_distill.core.numerics import SeededRng
from dlf_distill.models.config import DesignStrategy

logger = get_logger(__name__)

# ceil(ratio * size) with a guard so 0.2 * 100 stays 20
_RATIO_EPS = 1e-9


class EmptyPoolError(DistillError):
    """The design pool has no points."""

    pass


@dataclass(frozen=True, eq=False)
class DesignSet:
    """Design points in standardized feature units and how they were chosen."""

    points: np.ndarray
    provenance: DesignStrategy

    def __post_init__(self) -> None:
        points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if points.shape[0] < 1:
            raise EmptyPoolError("a design set needs at least one point")
        object.__setattr__(self, "points", points)

    @property
    def size(self) -> int:
        return int(self.points.shape[0])


def design_size(pool_size: int, ratio: float) -> int:
    return max(1, math.ceil(ratio * pool_size - _RATIO_EPS))


def mixup_pair(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """Convex combination ``lam * a + (1 - lam) * b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cannot mix samples of shapes {a.shape} and {b.shape}")
    return lam * a + (1.0 - lam) * b


def mixup_samples(
    features: np.ndarray,
    count: int,
    rng: SeededRng,
    targets: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """
    Draw ``count`` mixup points from two distinct random parents each.

    ``lam`` is Uniform[0, 1] per pair. Targets, when given, are mixed with the
    same ``lam``.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    n = features.shape[0]
    if n == 0:
        raise EmptyPoolError("cannot mix an empty pool")
    first = rng.integers(0, n, count)
    if n > 1:
        # shift by 1..n-1 so the second parent always differs from the first
        second = (first + rng.integers(1, n, count)) % n
    else:
        second = first.copy()
    lam = rng.uniform(0.0, 1.0, count)
    mixed = mixup_pair(features[first], features[second], lam[:, None])
    mixed_targets = None
    if targets is not None:
        targets = np.asarray(targets, dtype=np.float64)
        mixed_targets = mixup_pair(targets[first], targets[second], lam)
    return mixed, mixed_targets


def select_design(
    pool: np.ndarray,
    strategy: DesignStrategy,
    ratio: float,
    rng: SeededRng,
) -> DesignSet:
    """
    Choose ``ceil(ratio * len(pool))`` design points from a standardized pool.

    ``*-train`` strategies subsample the pool without replacement (ratio 1
    returns the pool itself, in order); ``*-mixup`` strategies generate that
    many mixup points. Which pool is passed (teacher training inputs or the
    held-out new-train part) is the caller's choice.

    Raises:
        EmptyPoolError: If the pool is empty
        ValueError: If ratio is outside ``(0, 1]``
    """
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2 or pool.shape[0] == 0:
        raise EmptyPoolError("design pool is empty")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"design ratio must be in (0, 1], got {ratio}")

    size = design_size(pool.shape[0], ratio)
    strategy = DesignStrategy(strategy)
    if strategy.uses_mixup:
        points, _ = mixup_samples(pool, size, rng)
    elif size == pool.shape[0]:
        points = pool.copy()
    else:
        points = pool[np.sort(rng.permutation(pool.shape[0])[:size])]

    logger.info("Design selected", strategy=strategy.value, size=size, pool=pool.shape[0])
    return DesignSet(points=points, provenance=strategy)
