"""Unit tests for teacher ensembles."""

import numpy as np
import pytest

from dlf_distill.core.errors import DimensionMismatchError, EmptyDataError
from dlf_distill.core.network import InvalidSpecError, init_params
from dlf_distill.core.numerics import SeededRng
from dlf_distill.models.config import TeacherConfig
from dlf_distill.models.dataset import Task
from dlf_distill.models.network import NetworkSpec
from dlf_distill.services.metrics_service import rmse
from dlf_distill.services.teacher_service import (
    NOISE_VAR_FLOOR,
    estimate_noise_var,
    fit_ensemble,
    get_teacher_service,
    prediction_matrix,
    teacher_member_probs,
    teacher_predictive,
)

SMALL_TEACHERS = TeacherConfig(hidden_layers=[16], count=3, epochs=60, lr=1e-2, batch_size=32)


class TestFitEnsemble:
    """Test regression ensembles."""

    def test_fits_linear_data(self, linear_data) -> None:
        """Test that the ensemble mean tracks a noisy line."""
        ensemble = get_teacher_service().train(linear_data, SMALL_TEACHERS, SeededRng(0))

        mixture = teacher_predictive(ensemble, linear_data.features)

        assert ensemble.size == 3
        assert mixture.means.shape == (len(linear_data), 3)
        assert rmse(mixture.mean(), linear_data.targets) < 0.3
        assert np.all(ensemble.noise_vars > 0.0)

    def test_members_differ(self, linear_data) -> None:
        """Test that members start from distinct initializations."""
        ensemble = get_teacher_service().train(linear_data, SMALL_TEACHERS, SeededRng(0))

        digests = {member.digest() for member in ensemble.members}

        assert len(digests) == 3

    def test_deterministic(self, linear_data) -> None:
        """Test that a fixed seed reproduces the ensemble."""
        service = get_teacher_service()

        a = service.train(linear_data, SMALL_TEACHERS, SeededRng(5))
        b = service.train(linear_data, SMALL_TEACHERS, SeededRng(5))

        assert [m.digest() for m in a.members] == [m.digest() for m in b.members]

    def test_needs_two_members(self, linear_data) -> None:
        """Test that a single member is not an ensemble."""
        spec = NetworkSpec(input_dim=1, hidden_layers=[4], output_dim=1)

        with pytest.raises(EmptyDataError):
            fit_ensemble(linear_data, spec, 1, 1, 1e-2, SeededRng(0))

    def test_rejects_wrong_input_dim(self, linear_data) -> None:
        """Test that the network must match the data width."""
        spec = NetworkSpec(input_dim=3, output_dim=1)

        with pytest.raises(DimensionMismatchError):
            fit_ensemble(linear_data, spec, 2, 1, 1e-2, SeededRng(0))

    def test_zero_width_config_is_invalid_spec(self, linear_data) -> None:
        """Test that a degenerate hidden layer in the config fails as InvalidSpecError."""
        config = SMALL_TEACHERS.model_copy(update={"hidden_layers": [0]})

        with pytest.raises(InvalidSpecError):
            get_teacher_service().train(linear_data, config, SeededRng(0))


class TestNoiseEstimate:
    """Test member noise variances."""

    def test_floor(self) -> None:
        """Test that a perfect fit is floored rather than zero."""
        spec = NetworkSpec(input_dim=1, output_dim=1)
        params = init_params(spec, SeededRng(0))
        x = np.linspace(-1, 1, 5)[:, None]
        y = (x @ params.weights[0].T)[:, 0]

        assert estimate_noise_var(params, x, y) == NOISE_VAR_FLOOR


class TestPredictions:
    """Test design-point predictions."""

    def test_regression_matrix_shape(self, linear_data) -> None:
        """Test the m x n prediction matrix."""
        ensemble = get_teacher_service().train(linear_data, SMALL_TEACHERS, SeededRng(0))

        pred = prediction_matrix(ensemble, np.zeros((7, 1)))

        assert pred.shape == (7, 3)

    def test_classification_logits(self, blobs_data) -> None:
        """Test raw logits and member probabilities for classification."""
        ensemble = get_teacher_service().train(blobs_data, SMALL_TEACHERS, SeededRng(0))

        logits = prediction_matrix(ensemble, np.zeros((4, 2)))
        probs = teacher_member_probs(ensemble, blobs_data.features[:6])

        assert ensemble.task is Task.CLASSIFICATION
        assert ensemble.class_count == 3
        assert logits.shape == (4, 3, 3)
        assert probs.shape == (6, 3, 3)
        np.testing.assert_allclose(probs.sum(axis=2), 1.0, atol=1e-12)

    def test_classification_accuracy(self, blobs_data) -> None:
        """Test that well-separated blobs are learned."""
        ensemble = get_teacher_service().train(blobs_data, SMALL_TEACHERS, SeededRng(0))

        probs = teacher_member_probs(ensemble, blobs_data.features).mean(axis=1)

        assert np.mean(probs.argmax(axis=1) == blobs_data.targets) > 0.9

    def test_rejects_wrong_point_dim(self, linear_data) -> None:
        """Test that design points must match the members."""
        ensemble = get_teacher_service().train(linear_data, SMALL_TEACHERS, SeededRng(0))

        with pytest.raises(DimensionMismatchError):
            prediction_matrix(ensemble, np.zeros((2, 2)))


class TestPersistence:
    """Test teacher artifacts."""

    def test_save_and_load(self, tmp_path, linear_data) -> None:
        """Test that a saved ensemble reloads with identical predictions."""
        service = get_teacher_service()
        ensemble = service.train(linear_data, SMALL_TEACHERS, SeededRng(0))
        path = tmp_path / "teachers.json"

        service.save(ensemble, path)
        loaded = service.load(path)

        np.testing.assert_array_equal(
            prediction_matrix(loaded, np.ones((3, 1))), prediction_matrix(ensemble, np.ones((3, 1)))
        )
        np.testing.assert_array_equal(loaded.noise_vars, ensemble.noise_vars)
