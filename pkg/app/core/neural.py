# FILE 5: neural.py
# Purpose: Small dense feed-forward engine (forward, analytic backward, plain SGD)
#          behind the autoencoder and GAIN imputers.
# Dependencies: numpy, scipy, pydantic

import logging
from dataclasses import dataclass, replace
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import expit

from app.core.errors import ConfigError, DimensionMismatchError, TrainingError
from app.core.rng import make_rng

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")


class TrainConfig(BaseModel):
    epochs: int = Field(200, ge=1)
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(0.01, gt=0)
    seed: int = Field(0, ge=0)


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # out x in
    biases: np.ndarray
    activation: str

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class DenseNet:
    layers: Tuple[DenseLayer, ...]
    seed: int = 0

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("a network needs at least one layer")
        for t, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ConfigError(f"unknown activation '{layer.activation}'")
            if layer.biases.shape != (layer.n_out,):
                raise DimensionMismatchError(f"layer {t}: bias shape {layer.biases.shape} != ({layer.n_out},)")
            if t and layer.n_in != self.layers[t - 1].n_out:
                raise DimensionMismatchError(
                    f"layer {t} takes {layer.n_in} inputs but layer {t - 1} emits {self.layers[t - 1].n_out}"
                )
            if not (np.isfinite(layer.weights).all() and np.isfinite(layer.biases).all()):
                raise TrainingError(f"layer {t} holds non-finite parameters")

    @property
    def input_size(self) -> int:
        return self.layers[0].n_in

    @property
    def output_size(self) -> int:
        return self.layers[-1].n_out

    def parameters(self) -> List[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weights.copy(), layer.biases.copy()]
        return out

    def with_parameters(self, params: Sequence[np.ndarray]) -> "DenseNet":
        layers = tuple(
            replace(layer, weights=np.array(params[2 * t], dtype=np.float64),
                    biases=np.array(params[2 * t + 1], dtype=np.float64))
            for t, layer in enumerate(self.layers)
        )
        return replace(self, layers=layers)


@dataclass(frozen=True)
class Gradients:
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    inputs: np.ndarray


def init_net(sizes: Sequence[int], activations: Sequence[str], seed: int) -> DenseNet:
    """Glorot-uniform weights, a = sqrt(6 / (fan_in + fan_out)); zero biases."""
    if len(activations) != len(sizes) - 1:
        raise ConfigError(f"{len(sizes) - 1} layers need {len(sizes) - 1} activations, got {len(activations)}")
    rng = make_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(DenseLayer(
            weights=rng.uniform(-a, a, size=(fan_out, fan_in)),
            biases=np.zeros(fan_out),
            activation=act,
        ))
    return DenseNet(layers=tuple(layers), seed=seed)


def _activate(z: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return expit(z)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "tanh":
        return 1.0 - a ** 2
    return np.ones_like(z)


def _as_batch(net: DenseNet, x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != net.input_size:
        raise DimensionMismatchError(f"network takes {net.input_size} inputs, got shape {x.shape}")
    return batch, single


def _trace(net: DenseNet, batch: np.ndarray):
    acts, pre = [batch], []
    for layer in net.layers:
        z = acts[-1] @ layer.weights.T + layer.biases
        pre.append(z)
        acts.append(_activate(z, layer.activation))
    return acts, pre


def forward(net: DenseNet, x) -> np.ndarray:
    batch, single = _as_batch(net, x)
    out = _trace(net, batch)[0][-1]
    return out[0] if single else out


def backward(net: DenseNet, x, upstream_grad) -> Gradients:
    """
    Gradients of sum(upstream_grad * forward(net, x)) with respect to every
    parameter (summed over batch rows) and to the input.
    """
    batch, single = _as_batch(net, x)
    upstream = np.asarray(upstream_grad, dtype=np.float64)
    upstream = upstream[None, :] if upstream.ndim == 1 else upstream
    if upstream.shape != (batch.shape[0], net.output_size):
        raise DimensionMismatchError(f"upstream gradient shape {upstream.shape} does not match output")

    acts, pre = _trace(net, batch)
    grad_w: List[np.ndarray] = [None] * len(net.layers)
    grad_b: List[np.ndarray] = [None] * len(net.layers)
    delta_out = upstream
    for t in reversed(range(len(net.layers))):
        layer = net.layers[t]
        delta = delta_out * _activation_grad(pre[t], acts[t + 1], layer.activation)
        grad_w[t] = delta.T @ acts[t]
        grad_b[t] = delta.sum(axis=0)
        delta_out = delta @ layer.weights
    inputs = delta_out[0] if single else delta_out
    return Gradients(weights=tuple(grad_w), biases=tuple(grad_b), inputs=inputs)


def sgd_step(net: DenseNet, grads: Gradients, lr: float) -> DenseNet:
    if lr < 0:
        raise ConfigError(f"learning rate must be >= 0, got {lr}")
    for g in grads.weights + grads.biases:
        if not np.isfinite(g).all():
            raise TrainingError("non-finite gradient")
    layers = tuple(
        replace(layer, weights=layer.weights - lr * gw, biases=layer.biases - lr * gb)
        for layer, gw, gb in zip(net.layers, grads.weights, grads.biases)
    )
    # DenseNet validation rejects non-finite parameters
    return replace(net, layers=layers)


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Seeded shuffle of 0..n-1 cut into consecutive batches."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def mse_train(net: DenseNet, X: np.ndarray, Y: np.ndarray, cfg: TrainConfig) -> Tuple[DenseNet, List[float]]:
    """
    Plain minibatch SGD on mean squared error. Returns the trained net and
    the full-data MSE before training and after each epoch.
    """
    rng = make_rng(cfg.seed)
    history = [float(np.mean((forward(net, X) - Y) ** 2))]
    for epoch in range(cfg.epochs):
        for idx in minibatches(X.shape[0], cfg.batch_size, rng):
            resid = forward(net, X[idx]) - Y[idx]
            net = sgd_step(net, backward(net, X[idx], 2.0 * resid / resid.size), cfg.learning_rate)
        history.append(float(np.mean((forward(net, X) - Y) ** 2)))
        if not np.isfinite(history[-1]):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
    return net, history
