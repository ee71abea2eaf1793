"""ReLU multilayer perceptron from geometry to circuit parameters.

Inputs are min-max normalized geometry vectors. The linear last layer emits
log-parameter deltas around ``output_offset``; the forward pass exponentiates,
so predicted circuit parameters are always positive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .optim import AdamState, adam_step


@dataclass
class MlpModel:
    layer_sizes: list[int]
    weights: list[np.ndarray]  # each (fan_in, fan_out)
    biases: list[np.ndarray]
    input_min: np.ndarray
    input_max: np.ndarray
    output_offset: np.ndarray

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        self.input_min = np.asarray(self.input_min, dtype=float)
        self.input_max = np.asarray(self.input_max, dtype=float)
        self.output_offset = np.asarray(self.output_offset, dtype=float)
        sizes = self.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise InvalidInputError("one weight matrix and bias per layer transition required")
        for w, b, n_in, n_out in zip(self.weights, self.biases, sizes[:-1], sizes[1:]):
            if w.shape != (n_in, n_out) or b.shape != (n_out,):
                raise InvalidInputError(f"layer shapes {w.shape}/{b.shape} do not match sizes {n_in}->{n_out}")
        if self.input_min.shape != (sizes[0],) or self.input_max.shape != (sizes[0],):
            raise InvalidInputError("normalization ranges must match the input dimension")
        if not np.all(self.input_min < self.input_max):
            raise InvalidInputError("input_min must be strictly below input_max")
        if self.output_offset.shape != (sizes[-1],):
            raise InvalidInputError("output_offset must match the output dimension")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def get_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos : pos + w.size].reshape(w.shape)
            pos += w.size
            self.biases[i] = flat[pos : pos + b.size].copy()
            pos += b.size
        if pos != flat.size:
            raise InvalidInputError("flat parameter vector has the wrong length")

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.input_min.copy(),
            self.input_max.copy(),
            self.output_offset.copy(),
        )


def init_mlp(layer_sizes, input_min, input_max, output_offset, seed: int = 0) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-bound, bound, (n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MlpModel(list(layer_sizes), weights, biases, input_min, input_max, output_offset)


def _as_inputs(model: MlpModel, geometry) -> np.ndarray:
    x = geometry.to_vector() if hasattr(geometry, "to_vector") else np.asarray(geometry, dtype=float)
    x = np.atleast_2d(x)
    if x.shape[1] != model.n_inputs:
        raise InvalidInputError(f"geometry has {x.shape[1]} entries, model expects {model.n_inputs}")
    return x


def forward_log(model: MlpModel, x):
    """Batched forward pass returning ``(log_params, cache)``; ``x`` has shape (B, n_in)."""
    x = _as_inputs(model, x)
    h = (x - model.input_min) / (model.input_max - model.input_min)
    acts = [h]
    pre = []
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return h + model.output_offset, (acts, pre)


def backward_log(model: MlpModel, cache, grad_log) -> np.ndarray:
    """Flat weight/bias gradient given ``d loss / d log_params`` of shape (B, n_out)."""
    acts, pre = cache
    delta = np.atleast_2d(np.asarray(grad_log, dtype=float))
    grads = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])


def mlp_forward(model: MlpModel, geometry) -> np.ndarray:
    """Positive circuit-parameter vector for one geometry."""
    log_p, _ = forward_log(model, geometry)
    return np.exp(log_p[0])


def mlp_backward(model: MlpModel, geometry, output_grad) -> np.ndarray:
    """Flat gradient over weights and biases given ``d loss / d params``."""
    log_p, cache = forward_log(model, geometry)
    output_grad = np.asarray(output_grad, dtype=float).reshape(1, -1)
    if output_grad.shape[1] != model.n_outputs:
        raise InvalidInputError("output_grad must match the output dimension")
    return backward_log(model, cache, output_grad * np.exp(log_p))


def train_regression(
    model: MlpModel,
    x,
    y_log,
    steps: int = 5000,
    lr: float = 1e-3,
    batch_size: int | None = None,
    seed: int = 0,
    tol: float = 0.0,
):
    """Adam on mean squared error between predicted and target log-parameters.

    Mutates and returns ``model`` along with the final full-batch MSE.
    """
    x = _as_inputs(model, x)
    y_log = np.atleast_2d(np.asarray(y_log, dtype=float))
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    flat = model.get_flat()
    state = AdamState.fresh(flat.size, lr=lr)
    bs = n if not batch_size or batch_size >= n else batch_size
    for _ in range(steps):
        idx = slice(None) if bs == n else rng.choice(n, bs, replace=False)
        out, cache = forward_log(model, x[idx])
        resid = out - y_log[idx]
        if tol and bs == n and np.mean(resid**2) < tol:
            break
        grad = backward_log(model, cache, 2.0 * resid / resid.size)
        state, flat = adam_step(state, flat, grad)
        model.set_flat(flat)
    out, _ = forward_log(model, x)
    return model, float(np.mean((out - y_log) ** 2))
