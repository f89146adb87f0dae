"""Multi-head feed-forward network with exact backpropagation and Adam.

Layer ``l`` maps ``h -> act(h @ W_l.T + b_l)`` with ``W_l`` of shape
``(out, in)``; the last layer has no activation. Heads are column slices of
the output, e.g. column 0 is the mean head and columns ``1..q`` the factor
loadings of a univariate DLF student.

Flat parameter layout (used by serialization): for each layer in order, the
weight matrix row-major followed by the bias vector.
"""

from __future__ import annotations

import hashlib
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from pydantic import ValidationError

from dlf_distill.core.errors import DimensionMismatchError, DistillError
from dlf_distill.core.numerics import SeededRng
from dlf_distill.models.network import Activation, NetworkSpec

DEFAULT_LR = 1e-3
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-8


class InvalidSpecError(DistillError):
    """Network specification has a degenerate dimension."""

    pass


@dataclass
class NetworkParams:
    """Weights and biases matching a ``NetworkSpec``."""

    spec: NetworkSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """Parameters interleaved as ``[W_0, b_0, W_1, b_1, ...]``."""
        out: list[np.ndarray] = []
        for weight, bias in zip(self.weights, self.biases, strict=True):
            out.extend((weight, bias))
        return out

    @classmethod
    def from_arrays(cls, spec: NetworkSpec, arrays: Sequence[np.ndarray]) -> NetworkParams:
        return cls(spec=spec, weights=list(arrays[0::2]), biases=list(arrays[1::2]))

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def unflatten(cls, spec: NetworkSpec, flat: Sequence[float] | np.ndarray) -> NetworkParams:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != spec.parameter_count:
            raise DimensionMismatchError(
                f"expected {spec.parameter_count} parameters, got {flat.size}"
            )
        sizes = spec.layer_sizes
        weights, biases, offset = [], [], 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:], strict=True):
            weights.append(flat[offset : offset + n_out * n_in].reshape(n_out, n_in).copy())
            offset += n_out * n_in
            biases.append(flat[offset : offset + n_out].copy())
            offset += n_out
        return cls(spec=spec, weights=weights, biases=biases)

    def copy(self) -> NetworkParams:
        return NetworkParams.from_arrays(self.spec, [a.copy() for a in self.arrays()])

    def digest(self) -> str:
        return hashlib.sha256(self.flatten().tobytes()).hexdigest()


def make_spec(
    input_dim: int,
    hidden_layers: Sequence[int],
    output_dim: int,
    activation: Activation = Activation.RELU,
) -> NetworkSpec:
    """
    Build a validated ``NetworkSpec``.

    Raises:
        InvalidSpecError: If any layer width is below 1
    """
    try:
        return NetworkSpec(
            input_dim=input_dim,
            hidden_layers=list(hidden_layers),
            output_dim=output_dim,
            activation=activation,
        )
    except ValidationError as exc:
        sizes = [input_dim, *hidden_layers, output_dim]
        raise InvalidSpecError(f"all layer widths must be >= 1, got {sizes}") from exc


def init_params(spec: NetworkSpec, rng: SeededRng) -> NetworkParams:
    """He-style uniform weights ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero biases."""
    sizes = spec.layer_sizes
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:], strict=True):
        limit = np.sqrt(6.0 / n_in)
        weights.append(rng.uniform(-limit, limit, (n_out, n_in)))
        biases.append(np.zeros(n_out))
    return NetworkParams(spec=spec, weights=weights, biases=biases)


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    return 1.0 - np.tanh(z) ** 2


def _forward_cache(
    params: NetworkParams, x: np.ndarray, clip: float | None
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.spec.input_dim:
        raise DimensionMismatchError(
            f"inputs of shape {x.shape} do not match input_dim {params.spec.input_dim}"
        )
    inputs, preacts = [], []
    h = x
    last = len(params.weights) - 1
    for layer, (weight, bias) in enumerate(zip(params.weights, params.biases, strict=True)):
        inputs.append(h)
        z = h @ weight.T + bias
        preacts.append(z)
        h = z if layer == last else _activate(z, params.spec.activation)
    if clip is not None:
        h = np.clip(h, -clip, clip)
    return h, inputs, preacts


def forward_batch(params: NetworkParams, x: np.ndarray, clip: float | None = None) -> np.ndarray:
    """Evaluate the network on every row of ``x``; returns ``N x output_dim``."""
    out, _, _ = _forward_cache(params, x, clip)
    return out


def forward(params: NetworkParams, x: np.ndarray, clip: float | None = None) -> np.ndarray:
    """Evaluate the network on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError(f"expected a vector, got shape {x.shape}")
    return forward_batch(params, x[None, :], clip)[0]


def backward(
    params: NetworkParams,
    x: np.ndarray,
    upstream: np.ndarray,
    clip: float | None = None,
) -> list[np.ndarray]:
    """Gradient of ``sum(upstream * forward_batch(params, x))`` w.r.t. every parameter.

    Returned in the order of ``NetworkParams.arrays()``.
    """
    out, inputs, preacts = _forward_cache(params, x, clip)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != out.shape:
        raise DimensionMismatchError(
            f"upstream gradient {upstream.shape} does not match outputs {out.shape}"
        )
    grad = upstream
    if clip is not None:
        grad = grad * (np.abs(preacts[-1]) <= clip)
    grads: list[np.ndarray] = []
    for layer in range(len(params.weights) - 1, -1, -1):
        grads.append(grad.sum(axis=0))
        grads.append(grad.T @ inputs[layer])
        if layer > 0:
            grad = (grad @ params.weights[layer]) * _activation_grad(
                preacts[layer - 1], params.spec.activation
            )
    grads.reverse()
    return grads


@dataclass
class AdamState:
    """First/second moment estimates and the step counter."""

    step: int = 0
    first: list[np.ndarray] = field(default_factory=list)
    second: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, arrays: Sequence[np.ndarray]) -> AdamState:
        return cls(
            step=0,
            first=[np.zeros_like(a) for a in arrays],
            second=[np.zeros_like(a) for a in arrays],
        )


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState | None,
    lr: float = DEFAULT_LR,
    beta1: float = DEFAULT_BETA1,
    beta2: float = DEFAULT_BETA2,
    eps: float = DEFAULT_EPS,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam descent step. Inputs are not modified."""
    if len(params) != len(grads):
        raise DimensionMismatchError(f"{len(params)} parameter arrays but {len(grads)} gradients")
    if state is None or not state.first:
        state = AdamState.zeros_like(params)
    if len(state.first) != len(params):
        raise DimensionMismatchError("optimizer state does not match parameters")

    step = state.step + 1
    new_params, first, second = [], [], []
    for p, g, m, v in zip(params, grads, state.first, state.second, strict=True):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionMismatchError(f"parameter {p.shape} vs gradient {g.shape}")
        m_new = beta1 * m + (1.0 - beta1) * g
        v_new = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m_new / (1.0 - beta1**step)
        v_hat = v_new / (1.0 - beta2**step)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        first.append(m_new)
        second.append(v_new)
    return new_params, AdamState(step=step, first=first, second=second)
