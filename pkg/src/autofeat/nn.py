"""Layers, losses, optimizers and gradient checking.

Batches carry the instance axis first: ``[N, d]`` for flat data and
``[N, C, H, W]`` for images.  Losses are means over every element of the
batch, so gradients are scaled by ``1 / pred.size``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .tensor import (
    Rng,
    ShapeError,
    Tensor,
    conv2d_same,
    conv2d_same_backward,
    gaussian_sample,
    max_pool2,
    max_pool2_backward,
    upsample2,
    upsample2_backward,
)

BCE_EPS = 1e-7
ACTIVATIONS = ("relu", "sigmoid", "linear")


class Mode(Enum):
    TRAINING = "training"
    INFERENCE = "inference"


class CacheError(RuntimeError):
    """Raised when backward is given a missing or stale forward cache."""


def sigmoid(z: Tensor) -> Tensor:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activate(name: str, z: Tensor) -> Tensor:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, z: Tensor, a: Tensor, grad_a: Tensor) -> Tensor:
    """Chain ``grad_a`` through the activation given pre-activation ``z`` and output ``a``."""
    if name == "relu":
        return grad_a * (z > 0)
    if name == "sigmoid":
        return grad_a * a * (1.0 - a)
    if name == "linear":
        return grad_a
    raise ValueError(f"unknown activation {name!r}")


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: Rng) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(shape, -limit, limit)


class Layer:
    """Base class.  Subclasses set ``kind`` and implement the three passes."""

    kind = "layer"
    activation = "linear"

    def __init__(self, in_shape: Sequence[int]) -> None:
        self.in_shape = tuple(int(s) for s in in_shape)

    @property
    def out_shape(self) -> tuple[int, ...]:
        return self.in_shape

    def params(self) -> dict[str, Tensor]:
        return {}

    def forward(self, x: Tensor, mode: Mode, rng: Rng | None) -> tuple[Tensor, dict]:
        raise NotImplementedError

    def backward(self, grad: Tensor, cache: dict) -> tuple[Tensor, dict[str, Tensor]]:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.in_shape} -> {self.out_shape}, {self.activation})"


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_shape, units: int, activation: str = "linear", rng: Rng | None = None) -> None:
        super().__init__(in_shape)
        if len(self.in_shape) != 1:
            raise ShapeError(f"dense layer needs flat input, got shape {self.in_shape}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.units = int(units)
        self.activation = activation
        fan_in = self.in_shape[0]
        if rng is None:
            self.weight = np.zeros((fan_in, self.units))
        else:
            self.weight = glorot_uniform((fan_in, self.units), fan_in, self.units, rng)
        self.bias = np.zeros(self.units)

    @property
    def out_shape(self):
        return (self.units,)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, mode, rng):
        z = x @ self.weight + self.bias
        a = activate(self.activation, z)
        return a, {"x": x, "z": z, "a": a}

    def backward(self, grad, cache):
        gz = activation_grad(self.activation, cache["z"], cache["a"], grad)
        return gz @ self.weight.T, {"weight": cache["x"].T @ gz, "bias": gz.sum(axis=0)}


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, in_shape, filters: int, kernel_size: int, activation: str = "linear", rng: Rng | None = None) -> None:
        super().__init__(in_shape)
        if len(self.in_shape) != 3:
            raise ShapeError(f"conv layer needs [C,H,W] input, got shape {self.in_shape}")
        if kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {kernel_size}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.filters = int(filters)
        self.kernel_size = int(kernel_size)
        self.activation = activation
        c_in = self.in_shape[0]
        shape = (self.filters, c_in, self.kernel_size, self.kernel_size)
        area = self.kernel_size**2
        if rng is None:
            self.weight = np.zeros(shape)
        else:
            self.weight = glorot_uniform(shape, c_in * area, self.filters * area, rng)
        self.bias = np.zeros(self.filters)

    @property
    def out_shape(self):
        return (self.filters,) + self.in_shape[1:]

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, mode, rng):
        z = conv2d_same(x, self.weight, self.bias)
        a = activate(self.activation, z)
        return a, {"x": x, "z": z, "a": a}

    def backward(self, grad, cache):
        gz = activation_grad(self.activation, cache["z"], cache["a"], grad)
        gx, gk, gb = conv2d_same_backward(cache["x"], self.weight, gz)
        return gx, {"weight": gk, "bias": gb}


class MaxPool2(Layer):
    kind = "max_pool2"

    def __init__(self, in_shape) -> None:
        super().__init__(in_shape)
        if len(self.in_shape) != 3:
            raise ShapeError(f"pooling needs [C,H,W] input, got shape {self.in_shape}")

    @property
    def out_shape(self):
        c, h, w = self.in_shape
        return (c, -(-h // 2), -(-w // 2))

    def forward(self, x, mode, rng):
        out, idx = max_pool2(x)
        return out, {"idx": idx, "shape": x.shape}

    def backward(self, grad, cache):
        return max_pool2_backward(grad, cache["idx"], cache["shape"]), {}


class Upsample2(Layer):
    kind = "upsample2"

    def __init__(self, in_shape) -> None:
        super().__init__(in_shape)
        if len(self.in_shape) != 3:
            raise ShapeError(f"upsampling needs [C,H,W] input, got shape {self.in_shape}")

    @property
    def out_shape(self):
        c, h, w = self.in_shape
        return (c, 2 * h, 2 * w)

    def forward(self, x, mode, rng):
        return upsample2(x), {}

    def backward(self, grad, cache):
        return upsample2_backward(grad), {}


class GaussianNoise(Layer):
    """Additive zero-mean Gaussian noise, active in training mode only."""

    kind = "gaussian_noise"

    def __init__(self, in_shape, sd: float) -> None:
        super().__init__(in_shape)
        if sd < 0:
            raise ValueError(f"noise sd must be non-negative, got {sd}")
        self.sd = float(sd)

    def forward(self, x, mode, rng):
        if mode is Mode.INFERENCE:
            return x, {}
        if rng is None:
            raise ValueError("training-mode forward through a noise layer needs an rng")
        noise = gaussian_sample(x.shape, 0.0, self.sd, rng)
        return x + noise, {"noise": noise}

    def backward(self, grad, cache):
        return grad, {}


class Activation(Layer):
    kind = "activation"

    def __init__(self, in_shape, activation: str) -> None:
        super().__init__(in_shape)
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation

    def forward(self, x, mode, rng):
        a = activate(self.activation, x)
        return a, {"z": x, "a": a}

    def backward(self, grad, cache):
        return activation_grad(self.activation, cache["z"], cache["a"], grad), {}


class Network:
    """Ordered layers with a marked code layer.

    ``code_layer`` indexes ``layers``; the encoder is ``layers[:code_layer+1]``
    and the decoder the remainder.
    """

    def __init__(self, input_shape: Sequence[int], layers: list[Layer], code_layer: int) -> None:
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers = layers
        if not 0 <= code_layer < len(layers):
            raise ValueError(f"code layer {code_layer} out of range for {len(layers)} layers")
        self.code_layer = code_layer
        self.version = 0

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.layers[-1].out_shape if self.layers else self.input_shape

    @property
    def code_shape(self) -> tuple[int, ...]:
        return self.layers[self.code_layer].out_shape

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params().values()]

    def touch(self) -> None:
        """Mark parameters as modified; outstanding forward caches become stale."""
        self.version += 1

    def __repr__(self) -> str:
        body = ", ".join(repr(layer) for layer in self.layers)
        return f"Network(code_layer={self.code_layer}, [{body}])"


@dataclass
class ForwardCache:
    network_id: int
    version: int
    start: int
    layer_caches: list[dict]
    outputs: list[Tensor]


def forward(
    network: Network,
    x: Tensor,
    mode: Mode = Mode.INFERENCE,
    rng: Rng | None = None,
    start: int = 0,
    stop: int | None = None,
) -> tuple[Tensor, ForwardCache]:
    """Apply ``network.layers[start:stop]`` to a batch.

    ``cache.outputs[i]`` holds the output of layer ``start + i``.
    """
    stop = len(network.layers) if stop is None else stop
    expected = network.input_shape if start == 0 else network.layers[start - 1].out_shape
    if tuple(x.shape[1:]) != expected:
        raise ShapeError(f"layer {start}: expected instances of shape {expected}, got {tuple(x.shape[1:])}")
    caches, outputs = [], []
    h = x
    for i in range(start, stop):
        layer = network.layers[i]
        if tuple(h.shape[1:]) != layer.in_shape:
            raise ShapeError(f"layer {i} ({layer.kind}): expected {layer.in_shape}, got {tuple(h.shape[1:])}")
        h, c = layer.forward(h, mode, rng)
        caches.append(c)
        outputs.append(h)
    return h, ForwardCache(id(network), network.version, start, caches, outputs)


def backward(
    network: Network,
    cache: ForwardCache | None,
    grad_out: Tensor,
    extra: dict[int, Tensor] | None = None,
) -> tuple[list[dict[str, Tensor]], Tensor]:
    """Reverse-mode gradients for the layers covered by ``cache``.

    ``extra`` maps a layer index to an additional gradient w.r.t. that
    layer's output (used for penalties on the code layer).  Returns per-layer
    parameter gradients (aligned with ``network.layers``; empty dicts for
    layers outside the cached range) and the gradient w.r.t. the input.
    """
    if cache is None:
        raise CacheError("backward called without a forward cache")
    if cache.network_id != id(network) or cache.version != network.version:
        raise CacheError("forward cache is stale: network changed since the forward pass")
    grads: list[dict[str, Tensor]] = [{} for _ in network.layers]
    g = grad_out
    for offset in range(len(cache.layer_caches) - 1, -1, -1):
        i = cache.start + offset
        if extra and i in extra:
            g = g + extra[i]
        g, grads[i] = network.layers[i].backward(g, cache.layer_caches[offset])
    return grads, g


def loss_mse(pred: Tensor, target: Tensor) -> tuple[float, Tensor]:
    if pred.shape != target.shape:
        raise ShapeError(f"mse: prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def loss_bce(pred: Tensor, target: Tensor) -> tuple[float, Tensor]:
    """Binary cross-entropy with predictions clamped to ``[1e-7, 1 - 1e-7]``.

    Clamped entries contribute no gradient.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"bce: prediction {pred.shape} vs target {target.shape}")
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    loss = -(target * np.log(p) + (1.0 - target) * np.log1p(-p))
    grad = (p - target) / (p * (1.0 - p)) / p.size
    grad = np.where((pred < BCE_EPS) | (pred > 1.0 - BCE_EPS), 0.0, grad)
    return float(np.mean(loss)), grad


LOSSES: dict[str, Callable[[Tensor, Tensor], tuple[float, Tensor]]] = {
    "mse": loss_mse,
    "bce": loss_bce,
}


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[Tensor] = field(default_factory=list)
    v: list[Tensor] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


def sgd_step(params: list[Tensor], grads: list[Tensor], lr: float) -> list[Tensor]:
    """In-place ``p -= lr * g``."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    for p, g in zip(params, grads):
        p -= lr * g
    return params


def adam_step(params: list[Tensor], grads: list[Tensor], state: OptimizerState) -> list[Tensor]:
    """One bias-corrected Adam update, in place.  Increments ``state.t`` first."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def optimizer_step(params: list[Tensor], grads: list[Tensor], state: OptimizerState) -> None:
    if state.kind == "sgd":
        sgd_step(params, grads, state.lr)
    else:
        adam_step(params, grads, state)


def flat_grads(network: Network, grads: list[dict[str, Tensor]]) -> list[Tensor]:
    """Parameter gradients in ``network.parameters()`` order."""
    out = []
    for layer, g in zip(network.layers, grads):
        for name, p in layer.params().items():
            out.append(g.get(name, np.zeros_like(p)))
    return out


def _oracle_loss(kind: str, pred: Tensor, target: Tensor):
    # independent of LOSSES; keeps the working precision of its operands
    if kind == "mse":
        return np.mean((pred - target) ** 2)
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    return -np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p))


def grad_check(
    network: Network,
    x: Tensor,
    h: float = 1e-6,
    loss: str = "mse",
    target: Tensor | None = None,
) -> float:
    """Max relative error between backprop and central-difference gradients.

    Works on a copy of ``network`` with every noise layer forced to sd=0 so
    the loss is deterministic.  ``target`` defaults to ``x`` (reconstruction).
    Backprop runs in float64; the difference quotients are evaluated in
    ``np.longdouble`` so cancellation in ``L(p+h) - L(p-h)`` does not swamp
    small gradient components.
    """
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    net = copy.deepcopy(network)
    for layer in net.layers:
        if isinstance(layer, GaussianNoise):
            layer.sd = 0.0
    target = x if target is None else target

    out, cache = forward(net, x, Mode.TRAINING, Rng(0))
    _, g = LOSSES[loss](out, target)
    analytic = flat_grads(net, backward(net, cache, g)[0])

    wide = np.longdouble
    for layer in net.layers:
        for name, p in layer.params().items():
            setattr(layer, name, p.astype(wide))
    xw, tw = x.astype(wide), target.astype(wide)

    def objective():
        pred, _ = forward(net, xw, Mode.TRAINING, Rng(0))
        return _oracle_loss(loss, pred, tw)

    worst = 0.0
    for p, a in zip(net.parameters(), analytic):
        flat, aflat = p.reshape(-1), a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = objective()
            flat[i] = orig - h
            down = objective()
            flat[i] = orig
            num = float((up - down) / (2 * wide(h)))
            denom = max(abs(aflat[i]), abs(num), 1e-12)
            worst = max(worst, abs(aflat[i] - num) / denom)
    return float(worst)
