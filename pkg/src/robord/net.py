"""Minimal dense feed-forward network with hand-derived backpropagation.

Everything is float64.  Layers are (weights, bias, activation) triples
with activation "relu" or "linear"; forward keeps the per-layer inputs
and pre-activations so backward can replay the chain rule exactly.
Gradient conventions: ``backward`` computes the gradient of
``sum(upstream * output)``, so callers average over a mini-batch by
scaling ``upstream`` by ``1/B``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import CacheMismatch, ConfigInvalid, DimensionMismatch, ParseError, ShapeMismatch

RELU = "relu"
LINEAR = "linear"


@dataclass
class DenseNet:
    weights: list[np.ndarray]  # each (fan_in, fan_out)
    biases: list[np.ndarray]  # each (fan_out,)
    activations: list[str]  # per layer, "relu" | "linear"

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, c in zip(self.weights, self.biases):
            out.append(w)
            out.append(c)
        return out

    def copy(self) -> "DenseNet":
        return DenseNet(
            weights=[w.copy() for w in self.weights],
            biases=[c.copy() for c in self.biases],
            activations=list(self.activations),
        )


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, c in zip(self.weights, self.biases):
            out.append(w)
            out.append(c)
        return out


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # layer inputs, one per layer
    preacts: list[np.ndarray]  # pre-activation values, one per layer
    shapes: list[tuple[int, int]]


def init_net(input_dim, hidden_sizes, activation, rng, output_dim=1) -> DenseNet:
    """Glorot-uniform weights, zero biases; hidden layers use ``activation``,
    the output layer is always linear."""
    if activation not in (RELU, LINEAR):
        raise ConfigInvalid(f"unknown activation {activation!r}")
    hidden_sizes = tuple(int(h) for h in hidden_sizes)
    if any(h < 1 for h in hidden_sizes):
        raise ConfigInvalid("hidden sizes must be >= 1")
    sizes = [int(input_dim), *hidden_sizes, int(output_dim)]
    weights, biases, acts = [], [], []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
        acts.append(activation if i < len(sizes) - 2 else LINEAR)
    return DenseNet(weights=weights, biases=biases, activations=acts)


def forward(net: DenseNet, x) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on a batch (B, d) or a single vector (d,)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionMismatch(
            f"input has shape {x.shape}, network expects (*, {net.input_dim})"
        )
    inputs, preacts = [], []
    h = x
    for w, c, act in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        z = h @ w + c
        preacts.append(z)
        h = np.maximum(z, 0.0) if act == RELU else z
    cache = ForwardCache(
        inputs=inputs, preacts=preacts, shapes=[w.shape for w in net.weights]
    )
    out = h[0] if squeeze else h
    return out, cache


def backward(net: DenseNet, cache: ForwardCache, upstream) -> Gradients:
    """Exact reverse-mode gradients of ``sum(upstream * output)``.

    The relu subgradient at exactly 0 is taken to be 0.
    """
    if cache.shapes != [w.shape for w in net.weights]:
        raise CacheMismatch("cache was produced by a different network")
    delta = np.asarray(upstream, dtype=np.float64)
    if delta.ndim == 1:
        delta = delta[None, :]
    if delta.shape != (cache.inputs[0].shape[0], net.output_dim):
        raise CacheMismatch(
            f"upstream shape {delta.shape} does not match cached batch"
        )
    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.biases)
    for layer in range(len(net.weights) - 1, -1, -1):
        if net.activations[layer] == RELU:
            delta = delta * (cache.preacts[layer] > 0.0)
        grad_w[layer] = cache.inputs[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ net.weights[layer].T
    return Gradients(weights=grad_w, biases=grad_b)


class AdamW:
    """Adaptive optimizer with decoupled weight decay.

    Decay multiplies each parameter by ``1 - lr * weight_decay`` before the
    moment-based update; ``decay_mask`` turns it off per parameter (used to
    exempt ordinal thresholds).  State arrays mirror parameter shapes.
    """

    def __init__(
        self,
        params: list[np.ndarray],
        learning_rate: float,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
        decay_mask: list[bool] | None = None,
    ):
        if learning_rate <= 0:
            raise ConfigInvalid(f"learning rate must be > 0, got {learning_rate}")
        if weight_decay < 0:
            raise ConfigInvalid(f"weight decay must be >= 0, got {weight_decay}")
        self.learning_rate = float(learning_rate)
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.first_moment = [np.zeros_like(p) for p in params]
        self.second_moment = [np.zeros_like(p) for p in params]
        self.decay_mask = (
            [True] * len(params) if decay_mask is None else list(decay_mask)
        )
        if len(self.decay_mask) != len(params):
            raise ShapeMismatch("decay_mask length does not match params")
        self.step_count = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update ``params`` in place from ``grads``."""
        if len(params) != len(self.first_moment):
            raise ShapeMismatch("parameter count changed")
        for p, g, m in zip(params, grads, self.first_moment):
            if p.shape != m.shape or g.shape != m.shape:
                raise ShapeMismatch(
                    f"parameter/gradient shape {p.shape}/{g.shape} does not"
                    f" match state {m.shape}"
                )
        self.step_count += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for i, (p, g) in enumerate(zip(params, grads)):
            if self.decay_mask[i] and self.weight_decay:
                p *= 1.0 - self.learning_rate * self.weight_decay
            m = self.first_moment[i]
            v = self.second_moment[i]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            p -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


_CHECKPOINT_MAGIC = "robord-checkpoint 1"


def _floats_to_hex(arr: np.ndarray) -> str:
    return " ".join(float(v).hex() for v in np.asarray(arr).ravel())


def _hex_to_floats(text: str, shape) -> np.ndarray:
    vals = np.array([float.fromhex(tok) for tok in text.split()])
    return vals.reshape(shape)


def save_checkpoint(path, net: DenseNet, thresholds=None, k: int | None = None) -> None:
    """Plain-text checkpoint; hex floats make the round trip bit-exact."""
    lines = [_CHECKPOINT_MAGIC, f"layers {len(net.weights)}"]
    for w, c, act in zip(net.weights, net.biases, net.activations):
        lines.append(f"layer {w.shape[0]} {w.shape[1]} {act}")
        lines.append("weights " + _floats_to_hex(w))
        lines.append("biases " + _floats_to_hex(c))
    if thresholds is not None:
        lines.append("thresholds " + _floats_to_hex(np.asarray(thresholds)))
    if k is not None:
        lines.append(f"k {int(k)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Read a checkpoint; returns (net, thresholds or None, k or None)."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a robord checkpoint")
    try:
        n_layers = int(lines[1].split()[1])
        pos = 2
        weights, biases, acts = [], [], []
        for _ in range(n_layers):
            _, fan_in, fan_out, act = lines[pos].split()
            fan_in, fan_out = int(fan_in), int(fan_out)
            if act not in (RELU, LINEAR):
                raise ParseError(f"{path}: unknown activation {act!r}")
            weights.append(
                _hex_to_floats(lines[pos + 1].removeprefix("weights "), (fan_in, fan_out))
            )
            biases.append(_hex_to_floats(lines[pos + 2].removeprefix("biases "), (fan_out,)))
            acts.append(act)
            pos += 3
        thresholds, k = None, None
        while pos < len(lines) and lines[pos].strip():
            if lines[pos].startswith("thresholds "):
                payload = lines[pos].removeprefix("thresholds ").split()
                thresholds = _hex_to_floats(" ".join(payload), (len(payload),))
            elif lines[pos].startswith("k "):
                k = int(lines[pos].split()[1])
            else:
                raise ParseError(f"{path}: unexpected line {lines[pos]!r}")
            pos += 1
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{path}: malformed checkpoint ({exc})") from exc
    return DenseNet(weights=weights, biases=biases, activations=acts), thresholds, k
