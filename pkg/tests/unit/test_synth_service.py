"""Unit tests for the synthetic data generators."""

import numpy as np
import pytest

from dlf_distill.models.config import SynthKind
from dlf_distill.models.dataset import Task
from dlf_distill.services.synth_service import InvalidParamsError, gen_synth


class TestLinearRegression:
    """Test the noisy linear generator."""

    def test_shape_and_noise_level(self) -> None:
        """Test that residuals around the true line have the requested spread."""
        result = gen_synth(SynthKind.LINEAR_REGRESSION, {"n": 2000, "noise": 0.1}, seed=1)
        data = result.dataset

        resid = data.targets - 2.0 * data.features[:, 0]

        assert data.features.shape == (2000, 1)
        assert resid.std() == pytest.approx(0.1, rel=0.1)
        assert result.truth.params["slope"] == 2.0

    def test_same_seed_same_data(self) -> None:
        """Test reproducibility."""
        a = gen_synth(SynthKind.LINEAR_REGRESSION, seed=5).dataset
        b = gen_synth(SynthKind.LINEAR_REGRESSION, seed=5).dataset

        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.targets, b.targets)


class TestDlfGp:
    """Test draws from a known DLF process."""

    def test_truth_arrays(self) -> None:
        """Test array shapes and the low-rank covariance structure."""
        result = gen_synth(SynthKind.DLF_GP, {"m": 12, "n": 30, "q": 2}, seed=0)
        arrays = result.arrays

        assert arrays["loading"].shape == (12, 2)
        assert arrays["realizations"].shape == (12, 30)
        np.testing.assert_allclose(
            arrays["phi_phi_t"], arrays["loading"] @ arrays["loading"].T, atol=1e-14
        )
        np.testing.assert_allclose(
            arrays["covariance"], arrays["phi_phi_t"] + 0.01 * np.eye(12), atol=1e-14
        )
        np.testing.assert_array_equal(result.dataset.targets, arrays["realizations"][:, 0])

    def test_design_points_are_sorted(self) -> None:
        """Test that 1-D design points come out in order."""
        x = gen_synth(SynthKind.DLF_GP, {"m": 20, "n": 5}, seed=2).dataset.features[:, 0]

        assert np.all(np.diff(x) >= 0.0)


class TestBlobs:
    """Test the Gaussian blob classifiers."""

    def test_balanced_classes(self) -> None:
        """Test class labels and balance."""
        data = gen_synth(SynthKind.BLOBS, {"n": 300, "classes": 3}, seed=0).dataset

        assert data.task is Task.CLASSIFICATION
        np.testing.assert_array_equal(np.bincount(data.targets), [100, 100, 100])

    def test_flip_blobs_reverses_labels(self) -> None:
        """Test that flipped blobs share features and map y to c - 1 - y."""
        params = {"n": 90, "classes": 3}
        blobs = gen_synth(SynthKind.BLOBS, params, seed=4).dataset
        flipped = gen_synth(SynthKind.FLIP_BLOBS, params, seed=4).dataset

        np.testing.assert_array_equal(blobs.features, flipped.features)
        np.testing.assert_array_equal(flipped.targets, 2 - blobs.targets)


class TestInvalidParams:
    """Test parameter validation."""

    @pytest.mark.parametrize(
        ("kind", "params"),
        [
            (SynthKind.LINEAR_REGRESSION, {"n": 0}),
            (SynthKind.LINEAR_REGRESSION, {"noise": -1.0}),
            (SynthKind.LINEAR_REGRESSION, {"low": 1.0, "high": 0.0}),
            (SynthKind.DLF_GP, {"jitter": 0.0}),
            (SynthKind.BLOBS, {"classes": 1}),
            (SynthKind.BLOBS, {"colour": "red"}),
        ],
    )
    def test_rejected(self, kind, params) -> None:
        """Test that out-of-range or unknown parameters are refused."""
        with pytest.raises(InvalidParamsError):
            gen_synth(kind, params)
