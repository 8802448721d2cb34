"""Autoencoder construction, training and persistence.

Networks are declared by composing layer descriptors with ``+``::

    spec = input(36) + dense(12, "relu") + dense(3, "sigmoid") + dense(12, "relu") + output("linear")
    model = autoencoder_sparse(spec)
    history = train(model, x, TrainConfig(epochs=50))
    codes = encode(model, x)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .nn import (
    ACTIVATIONS,
    LOSSES,
    Activation,
    Conv2D,
    Dense,
    GaussianNoise,
    Layer,
    MaxPool2,
    Mode,
    Network,
    OptimizerState,
    Upsample2,
    backward,
    flat_grads,
    forward,
    optimizer_step,
)
from .tensor import Rng, ShapeError, Tensor, gaussian_sample

MODEL_FORMAT = "autofeat-model"
MODEL_VERSION = 1
RESAMPLE = (None, "pool2", "up2")

# rng stream ids derived from a single seed
STREAM_INIT, STREAM_SHUFFLE, STREAM_CORRUPT, STREAM_NOISE = 0, 1, 2, 3


class SpecError(ValueError):
    """Invalid network composition."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""


class ModelFileError(ValueError):
    """Model document does not follow the expected schema."""


class ModelVersionError(ModelFileError):
    pass


# -- declarative network specification ------------------------------------


@dataclass(frozen=True)
class InputDesc:
    shape: tuple[int, ...]


@dataclass(frozen=True)
class DenseDesc:
    units: int
    activation: str = "linear"


@dataclass(frozen=True)
class ConvDesc:
    filters: int
    kernel_size: int
    activation: str = "linear"
    resample: str | None = None


@dataclass(frozen=True)
class NoiseDesc:
    sd: float


@dataclass(frozen=True)
class OutputDesc:
    activation: str = "linear"


Descriptor = Union[InputDesc, DenseDesc, ConvDesc, NoiseDesc, OutputDesc]


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer descriptors plus an optional explicit code-layer index.

    ``code`` indexes ``descriptors``; when ``None`` the narrowest hidden
    descriptor is used (earliest on ties).
    """

    descriptors: tuple[Descriptor, ...]
    code: int | None = None

    def __add__(self, other: "NetworkSpec") -> "NetworkSpec":
        if not isinstance(other, NetworkSpec):
            return NotImplemented
        code = self.code
        if other.code is not None:
            code = len(self.descriptors) + other.code
        return NetworkSpec(self.descriptors + other.descriptors, code)

    def with_code(self, index: int) -> "NetworkSpec":
        return NetworkSpec(self.descriptors, index)

    def __str__(self) -> str:
        return "+".join(_format_desc(d) for d in self.descriptors)


def input(*shape: int) -> NetworkSpec:  # noqa: A001 - mirrors the composition vocabulary
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    return NetworkSpec((InputDesc(tuple(int(s) for s in shape)),))


def dense(units: int, activation: str = "linear") -> NetworkSpec:
    return NetworkSpec((DenseDesc(int(units), activation),))


def conv(
    filters: int,
    kernel_size: int,
    activation: str = "linear",
    max_pooling: int | None = None,
    upsampling: int | None = None,
) -> NetworkSpec:
    if max_pooling is not None and upsampling is not None:
        raise SpecError("conv takes either max_pooling or upsampling, not both")
    resample = None
    if max_pooling is not None:
        if max_pooling != 2:
            raise SpecError("only max_pooling=2 is supported")
        resample = "pool2"
    if upsampling is not None:
        if upsampling != 2:
            raise SpecError("only upsampling=2 is supported")
        resample = "up2"
    return NetworkSpec((ConvDesc(int(filters), int(kernel_size), activation, resample),))


def noise(sd: float) -> NetworkSpec:
    return NetworkSpec((NoiseDesc(float(sd)),))


def output(activation: str = "linear") -> NetworkSpec:
    return NetworkSpec((OutputDesc(activation),))


def _format_desc(d: Descriptor) -> str:
    if isinstance(d, InputDesc):
        return "input:" + "x".join(str(s) for s in d.shape)
    if isinstance(d, DenseDesc):
        return f"dense:{d.units}:{d.activation}"
    if isinstance(d, ConvDesc):
        tail = f":{d.resample}" if d.resample else ""
        return f"conv:{d.filters}:{d.kernel_size}:{d.activation}{tail}"
    if isinstance(d, NoiseDesc):
        return f"noise:{d.sd!r}"
    return f"output:{d.activation}"


def parse_spec(text: str) -> NetworkSpec:
    """Parse ``input:<d>|dense:<u>[:<act>]|conv:<f>:<k>[:<act>][:pool2|:up2]|noise:<sd>|output[:<act>]``
    descriptors joined by ``+``.  Image inputs are written ``input:CxHxW``.
    """
    if not text or not text.strip():
        raise SpecError("empty architecture string")
    descs: list[Descriptor] = []
    for pos, token in enumerate(text.strip().split("+")):
        parts = [p.strip() for p in token.strip().split(":")]
        kind, args = parts[0], parts[1:]
        try:
            if kind == "input":
                (dims,) = args
                descs.append(InputDesc(tuple(int(s) for s in dims.lower().split("x"))))
            elif kind == "dense":
                act = args[1] if len(args) > 1 else "linear"
                if len(args) > 2:
                    raise ValueError
                descs.append(DenseDesc(int(args[0]), act))
            elif kind == "conv":
                filters, ksize, rest = int(args[0]), int(args[1]), args[2:]
                resample = None
                if rest and rest[-1] in ("pool2", "up2"):
                    resample = rest.pop()
                act = rest.pop(0) if rest else "linear"
                if rest:
                    raise ValueError
                descs.append(ConvDesc(filters, ksize, act, resample))
            elif kind == "noise":
                (sd,) = args
                descs.append(NoiseDesc(float(sd)))
            elif kind == "output":
                if len(args) > 1:
                    raise ValueError
                descs.append(OutputDesc(args[0] if args else "linear"))
            else:
                raise SpecError(f"descriptor {pos}: unknown layer kind {kind!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, SpecError):
                raise
            raise SpecError(f"descriptor {pos}: cannot parse {token!r}") from None
    return NetworkSpec(tuple(descs))


def _check_activation(act: str, pos: int) -> None:
    if act not in ACTIVATIONS:
        raise SpecError(f"descriptor {pos}: unknown activation {act!r}")


def build_network(spec: NetworkSpec, rng: Rng | int = 0) -> Network:
    """Materialize a spec into layers with Glorot-uniform weights and zero biases.

    A trailing ``output`` descriptor becomes a dense layer (flat data) or a
    3x3 convolution (images) restoring the input shape.  It may be omitted
    when the last declared layer already reproduces the input shape.
    """
    if isinstance(rng, int):
        rng = Rng(rng, STREAM_INIT)
    descs = spec.descriptors
    if len(descs) < 2 or not isinstance(descs[0], InputDesc):
        raise SpecError("descriptor 0: a network starts with input()")
    for pos, d in enumerate(descs[1:], start=1):
        if isinstance(d, InputDesc):
            raise SpecError(f"descriptor {pos}: input() may only appear first")
        if isinstance(d, OutputDesc) and pos != len(descs) - 1:
            raise SpecError(f"descriptor {pos}: output() must be the last descriptor")

    in_shape = descs[0].shape
    if len(in_shape) not in (1, 3) or any(s <= 0 for s in in_shape):
        raise SpecError(f"descriptor 0: input shape must be (d,) or (C,H,W), got {in_shape}")
    layers: list[Layer] = []
    ends: dict[int, int] = {}  # descriptor index -> index of its last layer
    shape = in_shape
    for pos, d in enumerate(descs[1:], start=1):
        if isinstance(d, DenseDesc):
            _check_activation(d.activation, pos)
            if len(shape) != 1:
                raise SpecError(f"descriptor {pos}: dense after image-shaped data {shape}")
            if d.units <= 0:
                raise SpecError(f"descriptor {pos}: units must be positive")
            layers.append(Dense(shape, d.units, d.activation, rng))
        elif isinstance(d, ConvDesc):
            _check_activation(d.activation, pos)
            if len(shape) != 3:
                raise SpecError(f"descriptor {pos}: conv after flat data of shape {shape}")
            if d.filters <= 0 or d.kernel_size <= 0 or d.kernel_size % 2 == 0:
                raise SpecError(f"descriptor {pos}: conv needs positive filters and an odd kernel size")
            layers.append(Conv2D(shape, d.filters, d.kernel_size, d.activation, rng))
            if d.resample == "pool2":
                layers.append(MaxPool2(layers[-1].out_shape))
            elif d.resample == "up2":
                layers.append(Upsample2(layers[-1].out_shape))
        elif isinstance(d, NoiseDesc):
            if d.sd < 0:
                raise SpecError(f"descriptor {pos}: noise sd must be non-negative")
            layers.append(GaussianNoise(shape, d.sd))
        elif isinstance(d, OutputDesc):
            _check_activation(d.activation, pos)
            if len(in_shape) == 1:
                if len(shape) != 1:
                    raise SpecError(f"descriptor {pos}: output after image-shaped data {shape}")
                layers.append(Dense(shape, in_shape[0], d.activation, rng))
            else:
                if len(shape) != 3 or shape[1:] != in_shape[1:]:
                    raise SpecError(f"descriptor {pos}: output cannot restore shape {in_shape} from {shape}")
                layers.append(Conv2D(shape, in_shape[0], 3, d.activation, rng))
        shape = layers[-1].out_shape
        ends[pos] = len(layers) - 1

    if shape != in_shape:
        raise SpecError(f"network output shape {shape} differs from input shape {in_shape}")

    if spec.code is not None:
        if spec.code not in ends:
            raise SpecError(f"code marker {spec.code} does not name a layer descriptor")
        code_desc = spec.code
    else:
        last = len(descs) - 1
        hidden = [p for p in ends if p != last] or [last]
        code_desc = min(hidden, key=lambda p: (int(np.prod(layers[ends[p]].out_shape)), p))
    return Network(in_shape, layers, ends[code_desc])


# -- models ----------------------------------------------------------------


@dataclass
class Variant:
    """``basic``, ``sparse`` (KL target ``rho``, weight ``beta``) or ``denoising`` (noise ``sd``)."""

    kind: str = "basic"
    rho: float = 0.1
    beta: float = 0.2
    sd: float = 0.05

    def __post_init__(self) -> None:
        if self.kind not in ("basic", "sparse", "denoising"):
            raise ValueError(f"unknown variant {self.kind!r}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("sparsity target rho must lie in (0, 1)")
        if self.beta < 0 or self.sd < 0:
            raise ValueError("sparsity weight and noise sd must be non-negative")

    def to_json(self) -> dict:
        if self.kind == "sparse":
            return {"kind": "sparse", "rho": self.rho, "beta": self.beta}
        if self.kind == "denoising":
            return {"kind": "denoising", "sd": self.sd}
        return {"kind": "basic"}


@dataclass
class AutoencoderModel:
    network: Network
    variant: Variant = field(default_factory=Variant)
    loss: str = "mse"
    trained_epochs: int = 0

    def __post_init__(self) -> None:
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.network.output_shape != self.network.input_shape:
            raise ShapeError("autoencoder output shape must equal its input shape")
        if self.variant.kind == "sparse" and self.network.layers[self.network.code_layer].activation != "sigmoid":
            raise SpecError("sparse autoencoders need a sigmoid code layer")

    @property
    def code_width(self) -> int:
        return int(np.prod(self.network.code_shape))


def _network(spec_or_net: NetworkSpec | Network | str, seed: int) -> Network:
    if isinstance(spec_or_net, str):
        spec_or_net = parse_spec(spec_or_net)
    if isinstance(spec_or_net, NetworkSpec):
        return build_network(spec_or_net, seed)
    return spec_or_net


def autoencoder(network, loss: str = "mse", seed: int = 0) -> AutoencoderModel:
    return AutoencoderModel(_network(network, seed), Variant("basic"), loss)


def autoencoder_sparse(network, rho: float = 0.1, beta: float = 0.2, loss: str = "mse", seed: int = 0) -> AutoencoderModel:
    return AutoencoderModel(_network(network, seed), Variant("sparse", rho=rho, beta=beta), loss)


def autoencoder_denoising(network, sd: float = 0.05, loss: str = "mse", seed: int = 0) -> AutoencoderModel:
    return AutoencoderModel(_network(network, seed), Variant("denoising", sd=sd), loss)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size <= 0:
            raise ValueError("batch size must be positive")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    def optimizer_state(self) -> OptimizerState:
        return OptimizerState(self.optimizer, self.lr, self.beta1, self.beta2, self.eps)


def sparsity_penalty(codes: Tensor, rho: float, beta: float) -> tuple[float, Tensor]:
    """KL sparsity penalty on a batch of code activations.

    ``beta * sum_j KL(rho || mean_j)`` where ``mean_j`` is the batch-mean
    activation of unit ``j`` (clamped to ``[1e-7, 1 - 1e-7]``).  Returns the
    penalty and its gradient w.r.t. ``codes``.
    """
    n = codes.shape[0]
    flat = codes.reshape(n, -1)
    rho_hat = np.clip(flat.mean(axis=0), 1e-7, 1.0 - 1e-7)
    kl = rho * np.log(rho / rho_hat) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - rho_hat))
    d_rho_hat = beta * (-rho / rho_hat + (1.0 - rho) / (1.0 - rho_hat))
    grad = np.broadcast_to(d_rho_hat / n, flat.shape).reshape(codes.shape)
    return float(beta * kl.sum()), np.array(grad)


def corrupt_gaussian(batch: Tensor, sd: float, rng: Rng) -> Tensor:
    """Additive Gaussian corruption; results are not clipped."""
    return batch + gaussian_sample(batch.shape, 0.0, sd, rng)


def _features(data) -> Tensor:
    x = getattr(data, "features", data)
    return np.asarray(x, dtype=np.float64)


def train(model: AutoencoderModel, data, cfg: TrainConfig) -> list[float]:
    """Mini-batch training of ``model`` in place; returns per-epoch mean loss.

    The denoising variant feeds a freshly corrupted copy of each batch and
    scores the reconstruction against the clean batch.  The sparse variant
    adds the KL penalty on the code layer.  A final short batch is kept.
    """
    x = _features(data)
    net = model.network
    if tuple(x.shape[1:]) != net.input_shape:
        raise ShapeError(f"data instances have shape {tuple(x.shape[1:])}, model expects {net.input_shape}")
    n = x.shape[0]
    if cfg.epochs and n == 0:
        raise ValueError("cannot train on an empty dataset")
    batch = min(cfg.batch_size, n) if n else cfg.batch_size
    loss_fn = LOSSES[model.loss]
    variant = model.variant
    base = Rng(cfg.seed)
    shuffle_rng = base.child(STREAM_SHUFFLE)
    corrupt_rng = base.child(STREAM_CORRUPT)
    noise_rng = base.child(STREAM_NOISE)
    state = cfg.optimizer_state()
    params = net.parameters()
    code = net.code_layer

    history: list[float] = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, batch)):
            clean = x[order[lo : lo + batch]]
            inputs = corrupt_gaussian(clean, variant.sd, corrupt_rng) if variant.kind == "denoising" else clean
            out, cache = forward(net, inputs, Mode.TRAINING, noise_rng)
            loss, grad = loss_fn(out, clean)
            extra = None
            if variant.kind == "sparse":
                penalty, pgrad = sparsity_penalty(cache.outputs[code], variant.rho, variant.beta)
                loss += penalty
                extra = {code: pgrad}
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}")
            grads, _ = backward(net, cache, grad, extra)
            optimizer_step(params, flat_grads(net, grads), state)
            net.touch()
            total += loss * clean.shape[0]
        history.append(total / n)
        model.trained_epochs += 1
    return history


def _check_input(model: AutoencoderModel, x: Tensor, shape: tuple[int, ...], what: str) -> None:
    if tuple(x.shape[1:]) != shape:
        raise ShapeError(f"{what}: expected instances of shape {shape}, got {tuple(x.shape[1:])}")


def encode(model: AutoencoderModel, data) -> Tensor:
    """Code-layer activations in inference mode, one row per instance."""
    x = _features(data)
    net = model.network
    _check_input(model, x, net.input_shape, "encode")
    codes, _ = forward(net, x, Mode.INFERENCE, stop=net.code_layer + 1)
    return codes


def decode(model: AutoencoderModel, codes) -> Tensor:
    codes = np.asarray(codes, dtype=np.float64)
    net = model.network
    _check_input(model, codes, net.code_shape, "decode")
    if net.code_layer + 1 == len(net.layers):
        return codes
    out, _ = forward(net, codes, Mode.INFERENCE, start=net.code_layer + 1)
    return out


def reconstruct(model: AutoencoderModel, data) -> Tensor:
    x = _features(data)
    _check_input(model, x, model.network.input_shape, "reconstruct")
    out, _ = forward(model.network, x, Mode.INFERENCE)
    return out


# -- persistence -------------------------------------------------------------


def _layer_json(layer: Layer) -> dict:
    doc = {
        "kind": layer.kind,
        "activation": layer.activation,
        "shape-in": list(layer.in_shape),
        "shape-out": list(layer.out_shape),
    }
    params = layer.params()
    if params:
        doc["weights"] = params["weight"].reshape(-1).tolist()
        doc["bias"] = params["bias"].tolist()
    if isinstance(layer, Conv2D):
        doc["kernel_size"] = layer.kernel_size
    if isinstance(layer, GaussianNoise):
        doc["sd"] = layer.sd
    return doc


def model_to_json(model: AutoencoderModel) -> dict:
    net = model.network
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "variant": model.variant.to_json(),
        "loss": model.loss,
        "trained_epochs": model.trained_epochs,
        "input_shape": list(net.input_shape),
        "layers": [_layer_json(layer) for layer in net.layers],
        "code_layer": net.code_layer,
    }


def save_model(model: AutoencoderModel, path) -> None:
    """Write the model as JSON; floats use shortest round-trip decimal form."""
    text = json.dumps(model_to_json(model), indent=1, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _finite_array(values, shape, where: str) -> np.ndarray:
    try:
        arr = np.array(values, dtype=np.float64)
    except (TypeError, ValueError):
        raise ModelFileError(f"{where}: expected a list of numbers") from None
    if arr.ndim != 1 or arr.size != int(np.prod(shape)):
        raise ModelFileError(f"{where}: expected {int(np.prod(shape))} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ModelFileError(f"{where}: non-finite value")
    return arr.reshape(shape)


def _layer_from_json(doc: dict, i: int) -> Layer:
    where = f"layer {i}"
    try:
        kind = doc["kind"]
        in_shape = tuple(int(s) for s in doc["shape-in"])
        out_shape = tuple(int(s) for s in doc["shape-out"])
        act = doc.get("activation", "linear")
        if act not in ACTIVATIONS:
            raise ModelFileError(f"{where}: unknown activation {act!r}")
        if kind == "dense":
            layer = Dense(in_shape, out_shape[0], act)
        elif kind == "conv2d":
            layer = Conv2D(in_shape, out_shape[0], int(doc["kernel_size"]), act)
        elif kind == "max_pool2":
            layer = MaxPool2(in_shape)
        elif kind == "upsample2":
            layer = Upsample2(in_shape)
        elif kind == "gaussian_noise":
            sd = float(doc["sd"])
            if not math.isfinite(sd):
                raise ModelFileError(f"{where}: non-finite sd")
            layer = GaussianNoise(in_shape, sd)
        elif kind == "activation":
            layer = Activation(in_shape, act)
        else:
            raise ModelFileError(f"{where}: unknown layer kind {kind!r}")
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise ModelFileError(f"{where}: malformed layer ({exc})") from None
    if layer.out_shape != out_shape:
        raise ModelFileError(f"{where}: declared output shape {out_shape} inconsistent with {layer.out_shape}")
    if layer.params():
        if "weights" not in doc or "bias" not in doc:
            raise ModelFileError(f"{where}: missing weights or bias")
        layer.weight = _finite_array(doc["weights"], layer.weight.shape, where + " weights")
        layer.bias = _finite_array(doc["bias"], layer.bias.shape, where + " bias")
    return layer


def model_from_json(doc) -> AutoencoderModel:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFileError(f"not an {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelVersionError(f"unsupported model version {doc.get('version')!r}; this build reads version {MODEL_VERSION}")
    try:
        vdoc = dict(doc["variant"])
        variant = Variant(**vdoc)
        layer_docs = doc["layers"]
        code = int(doc["code_layer"])
        loss = doc["loss"]
        if not isinstance(layer_docs, list) or not layer_docs:
            raise ModelFileError("layers must be a non-empty list")
        layers = [_layer_from_json(ld, i) for i, ld in enumerate(layer_docs)]
        input_shape = tuple(int(s) for s in doc.get("input_shape", layers[0].in_shape))
        for i in range(1, len(layers)):
            if layers[i].in_shape != layers[i - 1].out_shape:
                raise ModelFileError(f"layer {i}: input shape does not match layer {i - 1} output")
        net = Network(input_shape, layers, code)
        model = AutoencoderModel(net, variant, loss, int(doc.get("trained_epochs", 0)))
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model document: {exc}") from None
    return model


def load_model(path) -> AutoencoderModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return model_from_json(doc)
