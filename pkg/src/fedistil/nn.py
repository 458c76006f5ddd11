"""Dense ReLU classifier with exact backpropagation, in float64 numpy.

A :class:`Model` is an immutable bundle of per-layer weights and biases.
Gradients are returned as a ``Model`` of the same shape so that
``sgd_step(model, grads, lr)`` is a plain elementwise update.

The output layer is a softmax, so ``forward`` returns probability rows.
Those rows are also what devices exchange as distilled values.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .prng import SplitMix64


@dataclass(frozen=True)
class Model:
    layer_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        sizes = self.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("layer count does not match layer_sizes")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise ValueError(
                    f"layer {l}: expected weight {(sizes[l + 1], sizes[l])} and bias "
                    f"{(sizes[l + 1],)}, got {w.shape} and {b.shape}"
                )

    @property
    def num_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_outputs(self) -> int:
        return self.layer_sizes[-1]

    def arrays(self) -> list[np.ndarray]:
        """Parameters in canonical order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, layer_sizes: Sequence[int], arrays: Sequence[np.ndarray]) -> "Model":
        return cls(tuple(layer_sizes), tuple(arrays[0::2]), tuple(arrays[1::2]))

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def equals(self, other: "Model") -> bool:
        """Bitwise parameter equality."""
        return self.layer_sizes == other.layer_sizes and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


def _check_sizes(layer_sizes: Sequence[int]) -> tuple[int, ...]:
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ValueError("layer_sizes needs at least an input and an output size")
    if any(s < 1 for s in sizes):
        raise ValueError(f"all layer sizes must be >= 1, got {list(sizes)}")
    return sizes


def model_init(layer_sizes: Sequence[int], rng: SplitMix64) -> Model:
    """Glorot-uniform weights, zero biases.

    Weights are filled layer by layer in row-major order, one ``f64`` draw
    each, as ``limit * (2u - 1)`` with ``limit = sqrt(6 / (fan_in + fan_out))``.
    The stream advances by exactly ``sum(fan_in * fan_out)`` draws.
    """
    sizes = _check_sizes(layer_sizes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        u = rng.f64_array(fan_in * fan_out).reshape(fan_out, fan_in)
        weights.append(limit * (2.0 * u - 1.0))
        biases.append(np.zeros(fan_out))
    return Model(sizes, tuple(weights), tuple(biases))


def zeros_like(model: Model) -> Model:
    return Model.from_arrays(model.layer_sizes, [np.zeros_like(a) for a in model.arrays()])


def _as_inputs(model: Model, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.num_inputs:
        raise ValueError(
            f"input width {x.shape[-1] if x.ndim else None} does not match model input size {model.num_inputs}"
        )
    return x


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_trace(model: Model, x: np.ndarray):
    # activations[l] is the input to layer l; pre[l] its pre-activation
    activations = [x]
    pre = []
    a = x
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        pre.append(z)
        if l < last:
            a = np.maximum(z, 0.0)
            activations.append(a)
    return activations, pre


def logits(model: Model, inputs) -> np.ndarray:
    x = _as_inputs(model, inputs)
    return _forward_trace(model, x)[1][-1]


def forward(model: Model, inputs) -> np.ndarray:
    """Class probabilities, shape ``(n, Y)``; each row sums to one."""
    return _softmax(logits(model, inputs))


def predict(model: Model, inputs) -> np.ndarray:
    return np.argmax(logits(model, inputs), axis=1)


def accuracy(model: Model, inputs, labels) -> float:
    labels = np.asarray(labels)
    return float(np.mean(predict(model, inputs) == labels))


def _backward(model: Model, activations, pre, dz: np.ndarray) -> Model:
    n_layers = len(model.weights)
    dws = [None] * n_layers
    dbs = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        dws[l] = dz.T @ activations[l]
        dbs[l] = dz.sum(axis=0)
        if l > 0:
            da = dz @ model.weights[l]
            dz = da * (pre[l - 1] > 0.0)
    return Model(model.layer_sizes, tuple(dws), tuple(dbs))


def ce_grad(model: Model, inputs, labels) -> tuple[float, Model]:
    """Mean cross-entropy of the labels and its exact parameter gradient."""
    x = _as_inputs(model, inputs)
    y = np.asarray(labels)
    if y.shape != (x.shape[0],):
        raise ValueError(f"expected {x.shape[0]} labels, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= model.num_outputs):
        raise ValueError(f"labels must lie in [0, {model.num_outputs})")
    y = y.astype(np.int64)
    n = x.shape[0]
    activations, pre = _forward_trace(model, x)
    z = pre[-1]
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - shifted[rows, y]))
    probs = np.exp(shifted - log_norm[:, None])
    dz = probs
    dz[rows, y] -= 1.0
    dz /= n
    return loss, _backward(model, activations, pre, dz)


def distill_loss(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean over rows of the squared Euclidean distance to the targets."""
    diff = np.asarray(probs) - np.asarray(targets)
    if diff.ndim != 2 or diff.shape[0] == 0:
        return 0.0
    return float(np.mean(np.sum(diff * diff, axis=1)))


def distill_grad(model: Model, inputs, targets) -> tuple[float, Model]:
    """Squared-error distance between the model's probabilities and ``targets``.

    ``loss = (1/n) * sum_x ||f(x) - target_x||^2``; the gradient is exact,
    backpropagated through the softmax Jacobian.
    """
    x = _as_inputs(model, inputs)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != (x.shape[0], model.num_outputs):
        raise ValueError(f"targets shape {t.shape} does not match {(x.shape[0], model.num_outputs)}")
    n = x.shape[0]
    activations, pre = _forward_trace(model, x)
    p = _softmax(pre[-1])
    diff = p - t
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    g = 2.0 * diff / n
    dz = p * (g - np.sum(g * p, axis=1, keepdims=True))
    return loss, _backward(model, activations, pre, dz)


def sgd_step(model: Model, grads: Model, step_size: float) -> Model:
    """``p <- p - step_size * g`` for every parameter."""
    if grads.layer_sizes != model.layer_sizes:
        raise ValueError("gradient shape does not match model")
    if step_size < 0:
        raise ValueError("step_size must be non-negative")
    new = [p - step_size * g for p, g in zip(model.arrays(), grads.arrays())]
    if not all(np.all(np.isfinite(a)) for a in new):
        raise FloatingPointError("non-finite parameter after SGD step; lower the step size")
    return Model.from_arrays(model.layer_sizes, new)
