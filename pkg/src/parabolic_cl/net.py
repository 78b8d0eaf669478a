"""Small dense network with hand-written backpropagation.

Everything operates on 2-D float64 arrays with one row per sample. The
network is a plain list of layers; the forward pass returns a cache that
``backward`` consumes to produce parameter gradients and the gradient with
respect to the input batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TrainingError

LOG_FLOOR = 1e-12
ACTIVATIONS = ("relu", "identity")


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class DenseNetwork:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        for layer in self.layers:
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.out_dim,):
                raise ShapeError("bias length must equal layer out-dim")
        if self.layers[-1].activation != "identity":
            raise ShapeError("final layer must be identity (logits)")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(
            [Layer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "weights": l.weights.tolist(),
                    "bias": l.bias.tolist(),
                    "activation": l.activation,
                }
                for l in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNetwork":
        return cls(
            [
                Layer(
                    np.asarray(l["weights"], dtype=float),
                    np.asarray(l["bias"], dtype=float),
                    l["activation"],
                )
                for l in d["layers"]
            ]
        )


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each layer
    pre: list[np.ndarray] = field(default_factory=list)  # pre-activations

    @property
    def batch(self) -> int:
        return self.inputs[0].shape[0]


def init_network(sizes, rng: np.random.Generator) -> DenseNetwork:
    """Build an MLP with layer widths ``sizes`` (input first, classes last).

    Hidden layers are relu with He-normal weights; the output layer is
    identity with uniform(-1/sqrt(in), 1/sqrt(in)) weights. Biases start at 0.
    """
    sizes = list(sizes)
    if len(sizes) < 2:
        raise ShapeError("need at least input and output sizes")
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
        last = i == len(sizes) - 2
        if last:
            bound = 1.0 / np.sqrt(n_in)
            w = rng.uniform(-bound, bound, size=(n_out, n_in))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
        layers.append(Layer(w, np.zeros(n_out), "identity" if last else "relu"))
    return DenseNetwork(layers)


def forward(net: DenseNetwork, X) -> tuple[np.ndarray, ForwardCache]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.in_dim:
        raise ShapeError(f"expected input (batch, {net.in_dim}), got {X.shape}")
    cache = ForwardCache()
    a = X
    for layer in net.layers:
        cache.inputs.append(a)
        z = a @ layer.weights.T + layer.bias
        cache.pre.append(z)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return a, cache


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def soft_cross_entropy_rows(logits, targets) -> tuple[np.ndarray, np.ndarray]:
    """Per-row loss ``-sum_i t_i log p_i`` and its per-row logit gradient.

    Targets are used as given, so rows off the simplex (negative entries,
    sums != 1) are allowed; the gradient is ``p * sum(t) - t``.
    """
    logits = np.asarray(logits, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if logits.shape != targets.shape or logits.ndim != 2:
        raise ShapeError(f"logits {logits.shape} vs targets {targets.shape}")
    logp = log_softmax(logits)
    losses = -(targets * np.maximum(logp, np.log(LOG_FLOOR))).sum(axis=1)
    p = np.exp(logp)
    grads = p * targets.sum(axis=1, keepdims=True) - targets
    return losses, grads


def soft_cross_entropy(logits, targets) -> tuple[float, np.ndarray]:
    """Batch-mean soft-label cross-entropy and gradient w.r.t. logits."""
    losses, grads = soft_cross_entropy_rows(logits, targets)
    n = losses.shape[0]
    return float(losses.mean()), grads / n


def backward(net: DenseNetwork, cache: ForwardCache, grad_logits):
    """Backpropagate ``grad_logits`` through ``net``.

    Returns ``(param_grads, grad_input)`` where ``param_grads`` is a list of
    ``(dW, db)`` tuples aligned with ``net.layers``.
    """
    delta = np.asarray(grad_logits, dtype=float)
    if len(cache.pre) != len(net.layers):
        raise ShapeError("cache does not belong to this network")
    if delta.shape != cache.pre[-1].shape:
        raise ShapeError(
            f"grad_logits {delta.shape} does not match cached batch {cache.pre[-1].shape}"
        )
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            delta = delta * (cache.pre[i] > 0)
        grads[i] = (delta.T @ cache.inputs[i], delta.sum(axis=0))
        delta = delta @ layer.weights
    return grads, delta


def sgd_step(net: DenseNetwork, param_grads, lr: float) -> None:
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    for dw, db in param_grads:
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise TrainingError("non-finite gradient")
    for layer, (dw, db) in zip(net.layers, param_grads):
        layer.weights -= lr * dw
        layer.bias -= lr * db


def predict(net: DenseNetwork, X) -> np.ndarray:
    logits, _ = forward(net, X)
    return logits.argmax(axis=1)


def per_sample_loss(net: DenseNetwork, X, Y) -> np.ndarray:
    logits, _ = forward(net, X)
    return soft_cross_entropy_rows(logits, Y)[0]


def input_grad_norms(net: DenseNetwork, X, Y) -> np.ndarray:
    """Per-row ``||d loss_i / d x_i||_2``."""
    logits, cache = forward(net, X)
    _, g = soft_cross_entropy_rows(logits, Y)
    _, gx = backward(net, cache, g)
    return np.linalg.norm(gx, axis=1)
