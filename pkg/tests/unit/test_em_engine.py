"""Unit tests for the shared EM driver."""

from unittest.mock import patch

import numpy as np

from dlf_distill.core.numerics import SeededRng
from dlf_distill.services.em_engine import STALL_WINDOW, run_em
from tests.factories import full_batch


class QuadraticAdapter:
    """One scalar parameter with ``Q = loglik = -(theta - 1)^2``."""

    def arrays(self, model: np.ndarray) -> list[np.ndarray]:
        return [model]

    def rebuild(self, model: np.ndarray, arrays: list[np.ndarray]) -> np.ndarray:
        return np.array(arrays[0], dtype=np.float64)

    def posterior(self, model: np.ndarray, index: np.ndarray) -> None:
        return None

    def q_and_grads(
        self, model: np.ndarray, stats: None, index: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        return self.loglik(model), [-2.0 * (model - 1.0)]

    def loglik(self, model: np.ndarray) -> float:
        return float(-np.sum((model - 1.0) ** 2))


class MisdirectedAdapter(QuadraticAdapter):
    """Reports the negated gradient, so every proposal lowers ``Q``."""

    def q_and_grads(
        self, model: np.ndarray, stats: None, index: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        return self.loglik(model), [2.0 * (model - 1.0)]


class TestGemGuard:
    """Test the guarded full-batch M-step."""

    def test_rejected_epoch_shrinks_the_next_proposal(self) -> None:
        """Test that an overshooting lr is reduced until a step is accepted."""
        config = full_batch(gem_guard=True, lr=1.0, max_backtracks=0, epochs=20, tol=1e-12)

        result = run_em(np.array([0.99]), QuadraticAdapter(), 1, config, SeededRng(0))

        trace = np.asarray(result.loglik_trace)
        assert result.rejected_steps >= 1
        assert result.accepted_steps > 0
        assert trace[-1] > trace[0]
        assert np.all(np.diff(trace) >= 0.0)

    def test_accepted_steps_keep_the_configured_lr(self) -> None:
        """Test that a well sized lr is never cut."""
        config = full_batch(gem_guard=True, lr=1e-2, epochs=10, tol=1e-12)

        result = run_em(np.array([0.0]), QuadraticAdapter(), 1, config, SeededRng(0))

        assert result.rejected_steps == 0
        assert result.accepted_steps == 10
        assert float(result.model[0]) > 0.05

    def test_long_stall_is_reported(self) -> None:
        """Test the warning after a window of rejected epochs."""
        config = full_batch(
            gem_guard=True, lr=1.0, max_backtracks=0, epochs=STALL_WINDOW, tol=1e-12
        )

        with patch("dlf_distill.services.em_engine.logger") as mock_logger:
            result = run_em(np.array([0.5]), MisdirectedAdapter(), 1, config, SeededRng(0))

        assert result.accepted_steps == 0
        assert not result.converged
        mock_logger.warning.assert_called_once()
