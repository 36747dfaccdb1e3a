from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
import numpy.typing as npt

from app.errors import LayerIndexError, LayerUpdateError, NonFiniteError, ParameterError, ShapeError
from app.services.linalg import Matrix, SvdResult, frobenius_norm, matmul, svd, trace


class ActivationKind(str, Enum):
    IDENTITY = "identity"
    RELU = "relu"
    TANH = "tanh"

    def apply(self, z: Matrix) -> Matrix:
        if self is ActivationKind.RELU:
            return np.maximum(z, 0.0)
        if self is ActivationKind.TANH:
            return np.tanh(z)
        return z.copy()

    def derivative(self, z: Matrix) -> Matrix:
        if self is ActivationKind.RELU:
            # 0 at the kink
            return (z > 0.0).astype(np.float64)
        if self is ActivationKind.TANH:
            return 1.0 - np.tanh(z) ** 2
        return np.ones_like(z)


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: ActivationKind = ActivationKind.IDENTITY

    def __post_init__(self) -> None:
        if self.in_dim < 1 or self.out_dim < 1:
            raise ShapeError(f"layer dims must be positive, got {self.in_dim}->{self.out_dim}")


@dataclass(frozen=True)
class NetworkParams:
    """Layered weights; with bias on, each layer sees a constant 1 appended to its input."""

    specs: tuple[LayerSpec, ...]
    weights: tuple[Matrix, ...]
    bias: bool = True

    def __post_init__(self) -> None:
        _check_chain(self.specs)
        if len(self.weights) != len(self.specs):
            raise ShapeError(f"{len(self.specs)} layer specs but {len(self.weights)} weight matrices")
        for index, (spec, weight) in enumerate(zip(self.specs, self.weights), start=1):
            expected = (spec.in_dim + int(self.bias), spec.out_dim)
            if weight.shape != expected:
                raise ShapeError(f"layer {index} weight has shape {weight.shape}, expected {expected}")
            if not np.all(np.isfinite(weight)):
                raise NonFiniteError(f"layer {index} weight contains NaN or Inf")
            weight.setflags(write=False)

    @property
    def depth(self) -> int:
        return len(self.specs)

    @property
    def input_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.specs[-1].out_dim

    def with_weights(self, weights: Sequence[Matrix]) -> NetworkParams:
        return NetworkParams(specs=self.specs, weights=tuple(weights), bias=self.bias)


@dataclass(frozen=True)
class ForwardTrace:
    """Batch-first record of a forward pass.

    inputs[i] is f^(i) fed to layer i+1 (bias feature included), pre[i]/post[i] are
    layer i+1's pre- and post-activations. A single vector input is a batch of one.
    """

    inputs: tuple[Matrix, ...]
    pre: tuple[Matrix, ...]
    post: tuple[Matrix, ...]
    activations: tuple[ActivationKind, ...]

    @property
    def output(self) -> Matrix:
        return self.post[-1]

    @property
    def batch_size(self) -> int:
        return self.output.shape[0]


@dataclass(frozen=True)
class TdError:
    """Per-sample error vectors, nonzero only at the taken action."""

    values: Matrix

    @property
    def magnitude(self) -> npt.NDArray[np.float64]:
        return np.linalg.norm(self.values, axis=1)


@dataclass(frozen=True)
class FeedbackContext:
    transform: Matrix
    svd: SvdResult
    s: float
    b: Matrix
    p: Matrix


def _check_chain(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise ShapeError("a network needs at least one layer")
    for index in range(1, len(specs)):
        if specs[index - 1].out_dim != specs[index].in_dim:
            raise ShapeError(
                f"layer {index} outputs {specs[index - 1].out_dim} but layer {index + 1} "
                f"expects {specs[index].in_dim}"
            )


def build_layer_specs(
    input_dim: int,
    hidden: Sequence[int],
    output_dim: int,
    activation: ActivationKind = ActivationKind.RELU,
) -> list[LayerSpec]:
    dims = [input_dim, *hidden, output_dim]
    specs = [LayerSpec(dims[i], dims[i + 1], activation) for i in range(len(dims) - 2)]
    specs.append(LayerSpec(dims[-2], dims[-1], ActivationKind.IDENTITY))
    return specs


def init_network(specs: Sequence[LayerSpec], seed: int, bias: bool = True) -> NetworkParams:
    _check_chain(specs)
    rng = np.random.default_rng(seed)
    weights = []
    for spec in specs:
        limit = math.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        weights.append(rng.uniform(-limit, limit, size=(spec.in_dim + int(bias), spec.out_dim)))
    return NetworkParams(specs=tuple(specs), weights=tuple(weights), bias=bias)


def _with_bias(values: Matrix, bias: bool) -> Matrix:
    if not bias:
        return values
    return np.hstack([values, np.ones((values.shape[0], 1))])


def forward(params: NetworkParams, x: npt.ArrayLike) -> ForwardTrace:
    batch = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if batch.ndim != 2 or batch.shape[1] != params.input_dim:
        raise ShapeError(f"input of shape {np.shape(x)} does not match input dim {params.input_dim}")
    inputs, pre, post = [], [], []
    current = batch
    for spec, weight in zip(params.specs, params.weights):
        layer_input = _with_bias(current, params.bias)
        z = layer_input @ weight
        current = spec.activation.apply(z)
        inputs.append(layer_input)
        pre.append(z)
        post.append(current)
    return ForwardTrace(
        inputs=tuple(inputs),
        pre=tuple(pre),
        post=tuple(post),
        activations=tuple(spec.activation for spec in params.specs),
    )


def q_values(params: NetworkParams, x: npt.ArrayLike) -> Matrix:
    return forward(params, x).output


def compute_transform(params: NetworkParams, trace: ForwardTrace, i: int) -> Matrix:
    """T^(i) per sample, shape (batch, output dim, eta_i): d y_hat / d z^(i)."""
    depth = params.depth
    if not 1 <= i <= depth:
        raise LayerIndexError(f"layer index {i} outside 1..{depth}")
    last = params.specs[-1]
    transform = np.eye(last.out_dim)[None, :, :] * last.activation.derivative(trace.pre[-1])[:, None, :]
    for j in range(depth, i, -1):
        weight = params.weights[j - 1][: params.specs[j - 1].in_dim]
        below = params.specs[j - 2].activation.derivative(trace.pre[j - 2])
        transform = (transform @ weight.T) * below[:, None, :]
    return transform


def td_error(
    outputs: Matrix,
    actions: npt.ArrayLike,
    targets: npt.ArrayLike,
    clip: float | None = None,
) -> TdError:
    actions = np.asarray(actions, dtype=np.int64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if outputs.shape[0] != actions.shape[0] or actions.shape != targets.shape:
        raise ShapeError(
            f"outputs {outputs.shape}, actions {actions.shape} and targets {targets.shape} disagree"
        )
    rows = np.arange(outputs.shape[0])
    values = np.zeros_like(outputs)
    errors = targets - outputs[rows, actions]
    if clip is not None:
        errors = np.clip(errors, -clip, clip)
    values[rows, actions] = errors
    return TdError(values=values)


def _layer_feedback(trace: ForwardTrace, matrix: Matrix, eps: TdError, layer: int) -> Matrix:
    if not 1 <= layer <= len(trace.inputs):
        raise LayerIndexError(f"layer index {layer} outside 1..{len(trace.inputs)}")
    f = trace.inputs[layer - 1]
    matrix = matrix if matrix.ndim == 3 else matrix[None, :, :]
    if eps.values.shape != (f.shape[0], matrix.shape[1]) or matrix.shape[0] != f.shape[0]:
        raise ShapeError(
            f"error {eps.values.shape}, feedback matrix {matrix.shape} and layer input {f.shape} disagree"
        )
    projected = np.einsum("ba,bak->bk", eps.values, matrix)
    return np.einsum("bp,bk->pk", f, projected) / f.shape[0]


def gradient_feedback(trace: ForwardTrace, transform: Matrix, eps: TdError, layer: int) -> Matrix:
    """delta^(i): batch mean of outer(f^(i-1), eps T^(i)), equal to -dJ_E/dW^(i)."""
    return _layer_feedback(trace, transform, eps, layer)


def build_feedback_matrix(transform: Matrix, s: float) -> tuple[Matrix, SvdResult]:
    decomposition = svd(transform)
    if s == 0.0:
        return np.array(transform, dtype=np.float64), decomposition
    shifted = decomposition.sigma + s
    return (decomposition.u * shifted[..., None, :]) @ decomposition.vt, decomposition


def edl_feedback(trace: ForwardTrace, b: Matrix, eps: TdError, layer: int) -> Matrix:
    return _layer_feedback(trace, b, eps, layer)


def feedback_context(
    params: NetworkParams,
    trace: ForwardTrace,
    layer: int,
    s: float,
    p: Matrix | None = None,
) -> FeedbackContext:
    transform = compute_transform(params, trace, layer)
    b, decomposition = build_feedback_matrix(transform, s)
    rows = params.specs[layer - 1].in_dim + int(params.bias)
    return FeedbackContext(
        transform=transform,
        svd=decomposition,
        s=s,
        b=b,
        p=np.eye(rows) if p is None else p,
    )


def regularizer(w: Matrix) -> float:
    return 0.5 * frobenius_norm(w) ** 2


def layer_cost(sigma: Matrix, p: Matrix, w: Matrix, lambda_i: float) -> float:
    correlation = trace(matmul(matmul(sigma.T, p), w))
    return 0.5 * (correlation + lambda_i * regularizer(w))


def total_cost(per_layer: Sequence[float]) -> float:
    return math.fsum(per_layer)


def empirical_cost(eps: TdError) -> float:
    return float(np.mean(0.5 * np.sum(eps.values**2, axis=1)))


def layer_lambdas(lambdas: Sequence[float] | float, depth: int) -> list[float]:
    if isinstance(lambdas, (int, float)):
        return [float(lambdas)] * depth
    values = [float(value) for value in lambdas]
    if len(values) == 1:
        return values * depth
    if len(values) != depth:
        raise ShapeError(f"{len(values)} decay coefficients for {depth} layers")
    return values


def regularized_empirical_cost(
    eps: TdError,
    params: NetworkParams,
    lambdas: Sequence[float] | float,
) -> float:
    coefficients = layer_lambdas(lambdas, params.depth)
    penalty = [lam * regularizer(w) for lam, w in zip(coefficients, params.weights)]
    return empirical_cost(eps) + math.fsum(penalty)


def signed_lambdas(
    deltas: Sequence[Matrix],
    params: NetworkParams,
    c: Sequence[float] | float,
) -> list[float]:
    """lambda^(i) = c^(i) sign(<dJ_E/dW^(i), grad R>), making the decay term non-negative in the descent."""
    scales = layer_lambdas(c, params.depth)
    return [
        scale * float(np.sign(-np.sum(delta * weight)))
        for scale, delta, weight in zip(scales, deltas, params.weights)
    ]


def apply_update(
    params: NetworkParams,
    feedbacks: Sequence[Matrix],
    alpha: float,
    lambdas: Sequence[float] | float,
) -> NetworkParams:
    if alpha < 0:
        raise ParameterError("learning rate", f"must be non-negative, got {alpha}")
    if len(feedbacks) != params.depth:
        raise ShapeError(f"{len(feedbacks)} feedback matrices for {params.depth} layers")
    coefficients = layer_lambdas(lambdas, params.depth)
    updated = []
    for index, (weight, feedback, lam) in enumerate(zip(params.weights, feedbacks, coefficients), start=1):
        if feedback.shape != weight.shape:
            raise ShapeError(f"layer {index} feedback {feedback.shape} does not match weight {weight.shape}")
        new_weight = weight + alpha * (feedback - lam * weight)
        if not np.all(np.isfinite(new_weight)):
            raise LayerUpdateError(index)
        updated.append(new_weight)
    return params.with_weights(updated)
