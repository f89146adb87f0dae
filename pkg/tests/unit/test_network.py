"""Unit tests for the feed-forward network and Adam."""

import numpy as np
import pytest

from dlf_distill.core.errors import DimensionMismatchError
from dlf_distill.core.network import (
    InvalidSpecError,
    NetworkParams,
    adam_step,
    backward,
    forward,
    forward_batch,
    init_params,
    make_spec,
)
from dlf_distill.core.numerics import SeededRng
from dlf_distill.models.network import Activation, NetworkSpec


def _objective(params: NetworkParams, x: np.ndarray, upstream: np.ndarray, clip=None) -> float:
    return float(np.sum(upstream * forward_batch(params, x, clip)))


def _check_gradients(spec: NetworkSpec, seed: int, clip: float | None = None) -> None:
    rng = SeededRng(seed)
    params = init_params(spec, rng)
    x = rng.standard_normal(5, spec.input_dim)
    upstream = rng.standard_normal(5, spec.output_dim)
    grads = backward(params, x, upstream, clip)
    eps = 1e-6

    arrays = params.arrays()
    for k, array in enumerate(arrays):
        for flat_index in range(array.size):
            idx = np.unravel_index(flat_index, array.shape)
            shifted = [a.copy() for a in arrays]
            shifted[k][idx] += eps
            plus = _objective(NetworkParams.from_arrays(spec, shifted), x, upstream, clip)
            shifted[k][idx] -= 2 * eps
            minus = _objective(NetworkParams.from_arrays(spec, shifted), x, upstream, clip)
            numeric = (plus - minus) / (2 * eps)
            assert grads[k][idx] == pytest.approx(numeric, rel=1e-4, abs=1e-6)


class TestForward:
    """Test network evaluation."""

    def test_output_shape(self, rng: SeededRng) -> None:
        """Test that outputs are N x output_dim."""
        spec = NetworkSpec(input_dim=3, hidden_layers=[5, 4], output_dim=2)
        params = init_params(spec, rng)

        out = forward_batch(params, rng.standard_normal(7, 3))

        assert out.shape == (7, 2)

    def test_single_input_matches_batch(self, rng: SeededRng) -> None:
        """Test that forward on one vector equals the batched row."""
        spec = NetworkSpec(input_dim=2, hidden_layers=[3], output_dim=2)
        params = init_params(spec, rng)
        x = rng.standard_normal(4, 2)

        np.testing.assert_array_equal(forward(params, x[2]), forward_batch(params, x)[2])

    def test_zero_hidden_layers_is_affine(self, rng: SeededRng) -> None:
        """Test that a network without hidden layers is W x + b."""
        spec = NetworkSpec(input_dim=2, hidden_layers=[], output_dim=3)
        params = init_params(spec, rng)
        params.biases[0] = np.array([1.0, -1.0, 0.5])
        x = rng.standard_normal(4, 2)

        expected = x @ params.weights[0].T + params.biases[0]

        np.testing.assert_allclose(forward_batch(params, x), expected, atol=1e-14)

    def test_clip_bounds_outputs(self, rng: SeededRng) -> None:
        """Test that clipping keeps every output in [-B, B]."""
        spec = NetworkSpec(input_dim=1, hidden_layers=[8], output_dim=2)
        params = init_params(spec, rng)
        x = 50.0 * rng.standard_normal(20, 1)

        out = forward_batch(params, x, clip=0.5)

        assert np.all(np.abs(out) <= 0.5)

    def test_wrong_input_width(self, rng: SeededRng) -> None:
        """Test that a mismatched input width is refused."""
        params = init_params(NetworkSpec(input_dim=2, output_dim=1), rng)

        with pytest.raises(DimensionMismatchError):
            forward_batch(params, np.zeros((3, 4)))


class TestParameters:
    """Test flat parameter layout and initialization."""

    def test_flatten_round_trip(self, rng: SeededRng) -> None:
        """Test that unflatten inverts flatten."""
        spec = NetworkSpec(input_dim=2, hidden_layers=[3], output_dim=4)
        params = init_params(spec, rng)

        restored = NetworkParams.unflatten(spec, params.flatten())

        assert restored.digest() == params.digest()

    def test_flat_layout_is_weight_then_bias(self) -> None:
        """Test the documented layer-by-layer, weight-then-bias layout."""
        spec = NetworkSpec(input_dim=2, hidden_layers=[], output_dim=1)
        params = NetworkParams.unflatten(spec, [1.0, 2.0, 3.0])

        np.testing.assert_array_equal(params.weights[0], [[1.0, 2.0]])
        np.testing.assert_array_equal(params.biases[0], [3.0])

    def test_unflatten_rejects_wrong_length(self) -> None:
        """Test that a flat vector of the wrong size is refused."""
        spec = NetworkSpec(input_dim=2, output_dim=1)

        with pytest.raises(DimensionMismatchError):
            NetworkParams.unflatten(spec, [1.0, 2.0])

    def test_init_bounds_and_zero_biases(self, rng: SeededRng) -> None:
        """Test the uniform fan-in initialization."""
        spec = NetworkSpec(input_dim=6, hidden_layers=[10], output_dim=2)
        params = init_params(spec, rng)

        assert np.all(np.abs(params.weights[0]) <= np.sqrt(6.0 / 6))
        assert np.all(np.abs(params.weights[1]) <= np.sqrt(6.0 / 10))
        assert all(np.all(b == 0.0) for b in params.biases)

    def test_parameter_count(self) -> None:
        """Test the architecture parameter count."""
        spec = NetworkSpec(input_dim=3, hidden_layers=[4], output_dim=2)

        assert spec.parameter_count == 4 * 4 + 2 * 5

    def test_spec_rejects_zero_width(self) -> None:
        """Test that hidden widths must be positive."""
        with pytest.raises(ValueError):
            NetworkSpec(input_dim=1, hidden_layers=[0], output_dim=1)

    @pytest.mark.parametrize(
        ("input_dim", "hidden", "output_dim"), [(1, [0], 1), (0, [4], 1), (2, [3], 0)]
    )
    def test_make_spec_raises_invalid_spec(self, input_dim, hidden, output_dim) -> None:
        """Test that a zero width surfaces as InvalidSpecError."""
        with pytest.raises(InvalidSpecError):
            make_spec(input_dim, hidden, output_dim)

    def test_make_spec_keeps_shape(self) -> None:
        """Test the layer sizes of a valid spec."""
        spec = make_spec(3, [5, 4], 2, Activation.TANH)

        assert spec.layer_sizes == [3, 5, 4, 2]
        assert spec.activation is Activation.TANH


class TestBackward:
    """Test exact gradients against central finite differences."""

    @pytest.mark.parametrize(
        ("hidden", "activation"),
        [
            ([], Activation.RELU),
            ([4], Activation.TANH),
            ([4], Activation.RELU),
            ([3, 3], Activation.TANH),
        ],
    )
    def test_matches_finite_differences(self, hidden, activation) -> None:
        """Test backward against central differences across architectures."""
        spec = NetworkSpec(input_dim=2, hidden_layers=hidden, output_dim=3, activation=activation)

        _check_gradients(spec, seed=len(hidden))

    def test_matches_finite_differences_with_clip(self) -> None:
        """Test gradients through the output clip."""
        spec = NetworkSpec(input_dim=2, hidden_layers=[4], output_dim=2, activation=Activation.TANH)

        _check_gradients(spec, seed=5, clip=0.7)

    def test_rejects_wrong_upstream_shape(self, rng: SeededRng) -> None:
        """Test that the upstream gradient must match the outputs."""
        params = init_params(NetworkSpec(input_dim=1, output_dim=2), rng)

        with pytest.raises(DimensionMismatchError):
            backward(params, np.zeros((3, 1)), np.zeros((3, 1)))


class TestAdam:
    """Test the Adam update."""

    def test_first_step_moves_by_lr_against_gradient(self) -> None:
        """Test that the first bias-corrected step has magnitude about lr."""
        params = [np.array([1.0, -1.0])]
        grads = [np.array([0.5, -2.0])]

        new, state = adam_step(params, grads, None, lr=0.1)

        np.testing.assert_allclose(new[0], [0.9, -0.9], atol=1e-6)
        assert state.step == 1

    def test_inputs_are_not_modified(self) -> None:
        """Test that adam_step returns new arrays."""
        params = [np.zeros(2)]

        adam_step(params, [np.ones(2)], None)

        np.testing.assert_array_equal(params[0], np.zeros(2))

    def test_minimizes_quadratic(self) -> None:
        """Test convergence on a convex quadratic."""
        x = [np.array([3.0, -2.0])]
        state = None
        for _ in range(2000):
            x, state = adam_step(x, [2.0 * x[0]], state, lr=0.05)

        np.testing.assert_allclose(x[0], 0.0, atol=0.1)

    def test_rejects_mismatched_lists(self) -> None:
        """Test that parameters and gradients must pair up."""
        with pytest.raises(DimensionMismatchError):
            adam_step([np.zeros(2)], [], None)
