"""From-scratch dense feed-forward regressor.

Forward pass, squared-error loss with an L2 weight penalty, hand-derived
backpropagation, Adam updates with bias correction, and a deterministic
mini-batch training loop. Everything runs in double precision so the
finite-difference gradient harness is meaningful. Biases are exempt from
the L2 penalty and the ReLU subgradient at exactly zero is taken as zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import FeatureVector, ScalerParams, invert_target
from .weather import atomic_write_text

ACT_RELU = "relu"
ACT_IDENTITY = "identity"

CHECKPOINT_MAGIC = "OUTBREAKNET v1"

DEFAULT_HIDDEN_SIZES = (256, 128, 64, 32)


class BadArchitectureError(ValueError):
    pass


class DimMismatchError(ValueError):
    pass


class TraceMismatchError(ValueError):
    pass


class ShapeMismatchError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


class NonFiniteLossError(ArithmeticError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


class CheckpointFormatError(ValueError):
    pass


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str


@dataclass
class Network:
    layers: list[DenseLayer]
    layer_sizes: tuple[int, ...]

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...] (live references)."""
        params: list[np.ndarray] = []
        for layer in self.layers:
            params.append(layer.weights)
            params.append(layer.bias)
        return params

    def weight_square_sum(self) -> float:
        return float(sum(np.sum(layer.weights**2) for layer in self.layers))


@dataclass
class ForwardTrace:
    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    prediction: float


@dataclass
class HyperParams:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    l2_lambda: float = 1e-4
    epochs: int = 500
    batch_size: int = 32
    seed: int = 0

    def validate(self) -> None:
        if not (self.learning_rate > 0):
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not (self.epsilon > 0):
            raise ValueError("epsilon must be positive")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be nonnegative")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


@dataclass
class TrainingHistory:
    epoch_losses: list[tuple[float, float]] = field(default_factory=list)  # (data, regularized)

    @property
    def final_data_loss(self) -> float:
        return self.epoch_losses[-1][0]


def init_network(layer_sizes: Sequence[int], seed: int) -> Network:
    """Seeded uniform init scaled by 1/sqrt(fan_in); biases zero.

    Hidden layers get ReLU, the single output unit stays linear.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise BadArchitectureError("need at least input and output sizes")
    if any(s <= 0 for s in sizes):
        raise BadArchitectureError(f"all layer sizes must be positive: {sizes}")
    if sizes[-1] != 1:
        raise BadArchitectureError("output layer must have size 1")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        weights = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        bias = np.zeros(fan_out, dtype=np.float64)
        activation = ACT_IDENTITY if i == len(sizes) - 2 else ACT_RELU
        layers.append(DenseLayer(weights=weights, bias=bias, activation=activation))
    return Network(layers=layers, layer_sizes=sizes)


def _as_vector(x) -> np.ndarray:
    values = x.values if isinstance(x, FeatureVector) else x
    return np.asarray(values, dtype=np.float64)


def forward(net: Network, x) -> ForwardTrace:
    """Single-sample forward pass retaining all intermediates for backward."""
    a = _as_vector(x)
    if a.shape != (net.input_dim,):
        raise DimMismatchError(f"input shape {a.shape}, network expects ({net.input_dim},)")
    inputs, pre_acts, acts = [], [], []
    for layer in net.layers:
        inputs.append(a)
        z = layer.weights @ a + layer.bias
        pre_acts.append(z)
        a = np.maximum(z, 0.0) if layer.activation == ACT_RELU else z
        acts.append(a)
    return ForwardTrace(inputs, pre_acts, acts, prediction=float(a[0]))


def loss(prediction: float, target: float, net: Network, l2_lambda: float) -> tuple[float, float]:
    """Squared error and its L2-regularized variant (biases excluded)."""
    data = (prediction - target) ** 2
    return data, data + l2_lambda * net.weight_square_sum()


def backward(net: Network, trace: ForwardTrace, target: float, l2_lambda: float) -> list[np.ndarray]:
    """Exact gradients of the regularized loss, flat [dW0, db0, dW1, db1, ...]."""
    if len(trace.activations) != len(net.layers) or trace.inputs[0].shape != (net.input_dim,):
        raise TraceMismatchError("trace does not match network structure")
    for layer, z in zip(net.layers, trace.pre_activations):
        if z.shape != layer.bias.shape:
            raise TraceMismatchError("trace layer shapes do not match network")

    grads: list[np.ndarray] = [np.empty(0)] * (2 * len(net.layers))
    # d(loss)/d(activation) flowing backward; output layer is linear
    d = np.array([2.0 * (trace.prediction - target)])
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        if layer.activation == ACT_RELU:
            dz = d * (trace.pre_activations[idx] > 0.0)
        else:
            dz = d
        grads[2 * idx] = np.outer(dz, trace.inputs[idx]) + 2.0 * l2_lambda * layer.weights
        grads[2 * idx + 1] = dz.copy()
        d = layer.weights.T @ dz
    return grads


def adam_step(
    state: AdamState,
    params: list[np.ndarray],
    grads: Sequence[np.ndarray],
    hp: HyperParams,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected adaptive-moment update, elementwise and in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatchError("parameter/gradient/state counts differ")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatchError(f"param shape {p.shape} vs grad shape {g.shape}")
    state.t += 1
    t = state.t
    b1, b2 = hp.beta1, hp.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g**2
        m_hat = state.m[i] / (1.0 - b1**t)
        v_hat = state.v[i] / (1.0 - b2**t)
        p -= hp.learning_rate * m_hat / (np.sqrt(v_hat) + hp.epsilon)
    return params, state


def _batch_forward(net: Network, X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Row-batched forward; returns per-layer inputs and pre-activations."""
    a = X
    inputs, pre_acts = [], []
    for layer in net.layers:
        inputs.append(a)
        z = a @ layer.weights.T + layer.bias
        pre_acts.append(z)
        a = np.maximum(z, 0.0) if layer.activation == ACT_RELU else z
    inputs.append(a)  # final activations live at inputs[-1]
    return inputs, pre_acts


def batch_gradients(net: Network, X: np.ndarray, y: np.ndarray, l2_lambda: float) -> list[np.ndarray]:
    """Mean-over-batch gradients of the regularized loss.

    Equals the arithmetic mean of per-sample backward() outputs; kept
    vectorized for the training loop.
    """
    n = X.shape[0]
    inputs, pre_acts = _batch_forward(net, X)
    preds = inputs[-1][:, 0]
    grads: list[np.ndarray] = [np.empty(0)] * (2 * len(net.layers))
    d = (2.0 / n) * (preds - y)[:, None]
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        dz = d * (pre_acts[idx] > 0.0) if layer.activation == ACT_RELU else d
        grads[2 * idx] = dz.T @ inputs[idx] + 2.0 * l2_lambda * layer.weights
        grads[2 * idx + 1] = dz.sum(axis=0)
        d = dz @ layer.weights
    return grads


def _dataset_arrays(rows: Sequence[tuple]) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([_as_vector(fv) for fv, _ in rows])
    y = np.array([float(t) for _, t in rows], dtype=np.float64)
    return X, y


def train(net: Network, rows: Sequence[tuple], hp: HyperParams) -> TrainingHistory:
    """Seeded mini-batch training; per-epoch full-dataset losses recorded.

    Batch order is reshuffled every epoch from one seeded generator and the
    last batch may be short. Deterministic for fixed (rows, hp, seed).
    """
    hp.validate()
    if not rows:
        raise EmptyDatasetError("no training rows")
    X, y = _dataset_arrays(rows)
    if X.shape[1] != net.input_dim:
        raise DimMismatchError(f"feature dim {X.shape[1]}, network expects {net.input_dim}")

    rng = np.random.default_rng(hp.seed)
    params = net.parameters()
    state = AdamState.for_params(params)
    history = TrainingHistory()
    n = X.shape[0]
    # divergence surfaces as NonFiniteLossError, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(hp.epochs):
            order = rng.permutation(n)
            for lo in range(0, n, hp.batch_size):
                batch = order[lo : lo + hp.batch_size]
                grads = batch_gradients(net, X[batch], y[batch], hp.l2_lambda)
                adam_step(state, params, grads, hp)
            preds = _batch_forward(net, X)[0][-1][:, 0]
            data_loss = float(np.mean((preds - y) ** 2))
            reg_loss = data_loss + hp.l2_lambda * net.weight_square_sum()
            if not np.isfinite(reg_loss):
                raise NonFiniteLossError(epoch)
            history.epoch_losses.append((data_loss, reg_loss))
    return history


def predict(net: Network, scaler: ScalerParams, x) -> float:
    """Forward pass mapped back to original target units, floored at zero."""
    raw = forward(net, x).prediction
    return max(invert_target(scaler, raw), 0.0)


def _loss_from_layer(
    net: Network,
    cached_acts: list[np.ndarray],
    start: int,
    target: float,
    l2_lambda: float,
    weight_sq_sum: float,
) -> float:
    """Regularized loss recomputed from layer `start`, reusing activations."""
    a = cached_acts[start]
    for layer in net.layers[start:]:
        z = layer.weights @ a + layer.bias
        a = np.maximum(z, 0.0) if layer.activation == ACT_RELU else z
    return (float(a[0]) - target) ** 2 + l2_lambda * weight_sq_sum


def max_gradient_error(
    net: Network,
    grads: Sequence[np.ndarray],
    x,
    target: float,
    l2_lambda: float,
    h: float,
) -> float:
    """Max relative error between given gradients and central differences.

    Denominator is max(|analytic|, |numeric|, 1e-12) per parameter. The
    numeric side is pure forward arithmetic (activations before the
    perturbed layer are reused; they cannot be affected by it).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    xv = _as_vector(x)
    cached = [xv]
    for layer in net.layers:
        z = layer.weights @ cached[-1] + layer.bias
        cached.append(np.maximum(z, 0.0) if layer.activation == ACT_RELU else z)
    base_sq = net.weight_square_sum()

    worst = 0.0
    for idx, layer in enumerate(net.layers):
        dW, db = grads[2 * idx], grads[2 * idx + 1]
        W, b = layer.weights, layer.bias
        for (i, j), w in np.ndenumerate(W):
            W[i, j] = w + h
            up = _loss_from_layer(net, cached, idx, target, l2_lambda, base_sq - w**2 + (w + h) ** 2)
            W[i, j] = w - h
            down = _loss_from_layer(net, cached, idx, target, l2_lambda, base_sq - w**2 + (w - h) ** 2)
            W[i, j] = w
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(dW[i, j]), abs(numeric), 1e-12)
            worst = max(worst, abs(dW[i, j] - numeric) / denom)
        for i, bv in enumerate(b):
            b[i] = bv + h
            up = _loss_from_layer(net, cached, idx, target, l2_lambda, base_sq)
            b[i] = bv - h
            down = _loss_from_layer(net, cached, idx, target, l2_lambda, base_sq)
            b[i] = bv
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(db[i]), abs(numeric), 1e-12)
            worst = max(worst, abs(db[i] - numeric) / denom)
    return worst


def grad_check(net: Network, x, target: float, l2_lambda: float, h: float = 1e-5) -> float:
    """Compare backward() against central finite differences; returns max rel error."""
    trace = forward(net, x)
    grads = backward(net, trace, target, l2_lambda)
    return max_gradient_error(net, grads, x, target, l2_lambda, h)


# ---------------------------------------------------------------------------
# checkpoint format


def _fmt(x: float) -> str:
    return f"{x:.17e}"


def save_checkpoint(path: str | Path, net: Network, scaler: ScalerParams) -> None:
    """Text checkpoint that round-trips bit-exactly through load_checkpoint."""
    lines = [f"{CHECKPOINT_MAGIC} sizes=" + ",".join(str(s) for s in net.layer_sizes)]
    for layer in net.layers:
        for row in layer.weights:
            lines.append(" ".join(_fmt(v) for v in row))
        lines.append(" ".join(_fmt(v) for v in layer.bias))
    lines.append(f"SCALER fields={len(scaler.mins)}")
    for lo, hi in zip(scaler.mins, scaler.maxs):
        lines.append(f"{_fmt(lo)} {_fmt(hi)}")
    lines.append(f"TARGET {_fmt(scaler.target_min)} {_fmt(scaler.target_max)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _parse_floats(line: str, count: int, lineno: int) -> np.ndarray:
    toks = line.split()
    if len(toks) != count:
        raise CheckpointFormatError(f"line {lineno}: expected {count} values, got {len(toks)}")
    try:
        return np.array([float(t) for t in toks], dtype=np.float64)
    except ValueError as exc:
        raise CheckpointFormatError(f"line {lineno}: bad float ({exc})") from exc


def load_checkpoint(path: str | Path) -> tuple[Network, ScalerParams]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(CHECKPOINT_MAGIC + " sizes="):
        raise CheckpointFormatError("bad checkpoint magic")
    try:
        sizes = tuple(int(s) for s in lines[0].split("sizes=", 1)[1].split(","))
    except ValueError as exc:
        raise CheckpointFormatError(f"bad sizes list: {exc}") from exc
    if len(sizes) < 2 or any(s <= 0 for s in sizes) or sizes[-1] != 1:
        raise CheckpointFormatError(f"bad architecture {sizes}")

    pos = 1
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        if pos + fan_out + 1 > len(lines):
            raise CheckpointFormatError("truncated checkpoint (weights)")
        weights = np.stack(
            [_parse_floats(lines[pos + r], fan_in, pos + r + 1) for r in range(fan_out)]
        )
        bias = _parse_floats(lines[pos + fan_out], fan_out, pos + fan_out + 1)
        pos += fan_out + 1
        activation = ACT_IDENTITY if i == len(sizes) - 2 else ACT_RELU
        layers.append(DenseLayer(weights=weights, bias=bias, activation=activation))

    if pos >= len(lines) or not lines[pos].startswith("SCALER fields="):
        raise CheckpointFormatError("missing SCALER section")
    try:
        n_fields = int(lines[pos].split("fields=", 1)[1])
    except ValueError as exc:
        raise CheckpointFormatError(f"bad field count: {exc}") from exc
    pos += 1
    mins, maxs = [], []
    for r in range(n_fields):
        if pos + r >= len(lines):
            raise CheckpointFormatError("truncated checkpoint (scaler)")
        pair = _parse_floats(lines[pos + r], 2, pos + r + 1)
        mins.append(float(pair[0]))
        maxs.append(float(pair[1]))
    pos += n_fields
    if pos >= len(lines) or not lines[pos].startswith("TARGET "):
        raise CheckpointFormatError("missing TARGET line")
    pair = _parse_floats(lines[pos][len("TARGET ") :], 2, pos + 1)
    scaler = ScalerParams(
        mins=tuple(mins), maxs=tuple(maxs), target_min=float(pair[0]), target_max=float(pair[1])
    )
    return Network(layers=layers, layer_sizes=sizes), scaler
