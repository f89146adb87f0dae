"""Generic gradient-M-step EM driver shared by the univariate and multivariate students.

A model plugs in through an ``EmAdapter``: the engine only ever sees a flat
list of parameter arrays, a posterior computed on an index set of design
points, the expected complete log-likelihood ``Q`` with its gradients, and
the observed-data log-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Generic, Protocol, TypeVar

import numpy as np

from dlf_distill.core.errors import ConfigInvalidError, NonFiniteLossError
from dlf_distill.core.logging import get_logger, run_context
from dlf_distill.core.network import AdamState, adam_step
from dlf_distill.core.numerics import SeededRng
from dlf_distill.models.config import EmConfig, EmMode

logger = get_logger(__name__)

# step size regrowth after an accepted guarded step, capped at the configured lr
LR_GROWTH = 1.5
# consecutive rejected epochs before the guard reports a stall
STALL_WINDOW = 25

ModelT = TypeVar("ModelT")


class EmAdapter(Protocol[ModelT]):
    """Model-specific hooks used by ``run_em``."""

    def arrays(self, model: ModelT) -> list[np.ndarray]: ...

    def rebuild(self, model: ModelT, arrays: list[np.ndarray]) -> ModelT: ...

    def posterior(self, model: ModelT, index: np.ndarray) -> Any: ...

    def q_and_grads(
        self, model: ModelT, stats: Any, index: np.ndarray
    ) -> tuple[float, list[np.ndarray]]: ...

    def loglik(self, model: ModelT) -> float: ...


@dataclass
class EmResult(Generic[ModelT]):
    """Fitted model plus the observed log-likelihood after every epoch.

    ``loglik_trace[0]`` is the log-likelihood of the initialization.
    """

    model: ModelT
    loglik_trace: list[float] = field(default_factory=list)
    accepted_steps: int = 0
    rejected_steps: int = 0
    converged: bool = False


def _finite(value: float, what: str, epoch: int) -> float:
    if not np.isfinite(value):
        raise NonFiniteLossError(f"{what} is not finite at epoch {epoch}")
    return value


def _ascent_step(
    arrays: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState | None,
    lr: float,
) -> tuple[list[np.ndarray], AdamState]:
    # adam_step descends, Q is maximized
    return adam_step(arrays, [-g for g in grads], state, lr=lr)


def run_em(
    model: ModelT,
    adapter: EmAdapter[ModelT],
    n_points: int,
    config: EmConfig,
    rng: SeededRng,
) -> EmResult[ModelT]:
    """
    Fit by alternating closed-form E-steps with Adam M-steps on ``Q``.

    Mini-batch mode shuffles the design points every epoch and runs one
    E-step and one M-step per batch. Full-batch mode runs one exact E-step and
    one M-step per epoch; with ``gem_guard`` the step is accepted only if
    ``Q`` does not decrease, halving the learning rate up to
    ``max_backtracks`` times. A rejected epoch hands its reduced learning
    rate to the next one, and accepted steps grow it back towards
    ``config.lr``. Stops after ``epochs`` or once the relative
    log-likelihood change of an accepted step drops below ``tol``.

    Raises:
        ConfigInvalidError: If the mini-batch size exceeds the design size
        NonFiniteLossError: If ``Q`` or the log-likelihood stops being finite
    """
    if config.mode is EmMode.MINI_BATCH and config.batch_size > n_points:
        raise ConfigInvalidError(
            f"batch size {config.batch_size} exceeds design size {n_points}"
        )

    with run_context(em_mode=config.mode.value, gem_guard=config.gem_guard):
        return _fit(model, adapter, n_points, config, rng)


def _fit(
    model: ModelT,
    adapter: EmAdapter[ModelT],
    n_points: int,
    config: EmConfig,
    rng: SeededRng,
) -> EmResult[ModelT]:
    result: EmResult[ModelT] = EmResult(model=model)
    previous = _finite(adapter.loglik(model), "log-likelihood", 0)
    result.loglik_trace.append(previous)
    state: AdamState | None = None
    step_lr = config.lr
    stalled = 0

    for epoch in range(1, config.epochs + 1):
        moved = True
        if config.mode is EmMode.MINI_BATCH:
            order = rng.permutation(n_points)
            for start in range(0, n_points, config.batch_size):
                index = order[start : start + config.batch_size]
                stats = adapter.posterior(model, index)
                q_value, grads = adapter.q_and_grads(model, stats, index)
                _finite(q_value, "Q", epoch)
                arrays, state = _ascent_step(adapter.arrays(model), grads, state, config.lr)
                model = adapter.rebuild(model, arrays)
                result.accepted_steps += 1
        else:
            index = np.arange(n_points)
            stats = adapter.posterior(model, index)
            q_value, grads = adapter.q_and_grads(model, stats, index)
            _finite(q_value, "Q", epoch)
            lr = step_lr
            for _ in range(config.max_backtracks + 1 if config.gem_guard else 1):
                arrays, candidate_state = _ascent_step(adapter.arrays(model), grads, state, lr)
                candidate = adapter.rebuild(model, arrays)
                if not config.gem_guard:
                    break
                q_new, _ = adapter.q_and_grads(candidate, stats, index)
                if np.isfinite(q_new) and q_new >= q_value:
                    break
                lr *= 0.5
            else:
                candidate = None

            if candidate is None:
                # the next epoch starts from the last halved lr with fresh moments
                state = None
                step_lr = lr
                moved = False
                result.rejected_steps += 1
                stalled += 1
                if stalled % STALL_WINDOW == 0:
                    logger.warning(
                        "GEM guard rejected every step",
                        epochs=stalled,
                        lr=step_lr,
                        loglik=previous,
                    )
            else:
                model, state = candidate, candidate_state
                step_lr = min(config.lr, lr * LR_GROWTH)
                stalled = 0
                result.accepted_steps += 1

        current = _finite(adapter.loglik(model), "log-likelihood", epoch)
        result.loglik_trace.append(current)
        logger.debug("EM epoch", epoch=epoch, loglik=current, accepted=result.accepted_steps)

        if moved and abs(current - previous) <= config.tol * max(abs(previous), 1.0):
            result.converged = True
            break
        previous = current

    result.model = model
    logger.info(
        "EM finished",
        epochs=len(result.loglik_trace) - 1,
        loglik=result.loglik_trace[-1],
        accepted=result.accepted_steps,
        rejected=result.rejected_steps,
    )
    return result
