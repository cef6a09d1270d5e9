"""Generator, autoencoder and RF-augmented discriminator builders.

The discriminator head combines two feature vectors: ``h1`` from the frozen
pretrained encoder and ``h2`` from the trainable discriminator body, scored
as ``Y = sigmoid(h1 @ w1 + h2 @ w2 + b)``.  Without an encoder the head is a
plain dense layer on ``h2`` and the network is the baseline discriminator.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .autodiff import ACTIVATIONS, ComputeGraph, Parameter, Tensor, as_tensor, leaky_relu
from .autodiff.tensor import ShapeError, linear, sigmoid

LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "linear"


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    role: str = "generic"
    leaky_slope: float = LEAKY_SLOPE

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for layer in self.layers:
            if layer.in_dim < 1 or layer.out_dim < 1:
                raise ValueError(f"layer widths must be >= 1, got {layer}")
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer widths do not chain: {a.out_dim} -> {b.in_dim}")

    @property
    def input_shape(self) -> tuple[int]:
        return (self.layers[0].in_dim,)

    @property
    def output_shape(self) -> tuple[int]:
        return (self.layers[-1].out_dim,)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim


def _stack(in_dim: int, hidden: Sequence[int], out_dim: int, hidden_act: str,
           out_act: str) -> tuple[LayerSpec, ...]:
    if not hidden:
        raise ValueError("hidden width list must not be empty")
    widths = [in_dim, *hidden, out_dim]
    acts = [hidden_act] * len(hidden) + [out_act]
    return tuple(LayerSpec(a, b, act) for a, b, act in zip(widths, widths[1:], acts))


def build_mlp_generator(z_dim: int, hidden: Sequence[int], out_dim: int,
                        output: str = "linear") -> NetworkSpec:
    """relu hidden layers; ``output`` is "linear" for 2D points or "tanh" for images."""
    return NetworkSpec(_stack(z_dim, hidden, out_dim, "relu", output), role="generator")


def build_mlp_body(in_dim: int, hidden: Sequence[int], feature_dim: int,
                   role: str = "discriminator", slope: float = LEAKY_SLOPE) -> NetworkSpec:
    """Feature extractor used for both the discriminator body and the encoder.

    The feature vector is taken post-activation, so every layer is leaky-relu.
    """
    return NetworkSpec(_stack(in_dim, hidden, feature_dim, "leaky_relu", "leaky_relu"),
                       role=role, leaky_slope=slope)


def _uniform_init(rng: np.random.Generator, fan_in: int, shape, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class MLP:
    """Dense layer stack realising a NetworkSpec."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator | None = None,
                 prefix: str = "net", dtype=np.float32, trainable: bool = True):
        self.spec = spec
        self.prefix = prefix
        self.weights: list[Parameter] = []
        self.biases: list[Parameter] = []
        for i, layer in enumerate(spec.layers):
            shape_w, shape_b = (layer.in_dim, layer.out_dim), (layer.out_dim,)
            if rng is None:
                w, b = np.zeros(shape_w, dtype), np.zeros(shape_b, dtype)
            else:
                w = _uniform_init(rng, layer.in_dim, shape_w, dtype)
                b = _uniform_init(rng, layer.in_dim, shape_b, dtype)
            self.weights.append(Parameter(w, trainable, f"{prefix}.{i}.weight"))
            self.biases.append(Parameter(b, trainable, f"{prefix}.{i}.bias"))

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.spec.in_dim:
            raise ShapeError(f"{self.prefix}: expected (batch, {self.spec.in_dim}), got {x.shape}")
        for layer, w, b in zip(self.spec.layers, self.weights, self.biases):
            x = linear(x, w, b)
            if layer.activation == "leaky_relu":
                x = leaky_relu(x, self.spec.leaky_slope)
            else:
                x = ACTIVATIONS[layer.activation](x)
        return x

    def parameters(self) -> list[Parameter]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def named_parameters(self) -> Iterator[tuple[str, Parameter]]:
        for p in self.parameters():
            yield p.name, p

    @property
    def trainable(self) -> bool:
        return all(p.trainable for p in self.parameters())

    def freeze(self) -> "MLP":
        for p in self.parameters():
            p.freeze()
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in state:
                raise KeyError(f"checkpoint has no tensor {p.name!r}")
            p.assign(state[p.name])

    def graph(self) -> ComputeGraph:
        return ComputeGraph(lambda x: {"y": self(x)}, {"x": (None, self.spec.in_dim)},
                            self.parameters())


Generator = MLP
Encoder = MLP
Decoder = MLP


def build_autoencoder(enc_spec: NetworkSpec, dec_spec: NetworkSpec,
                      rng: np.random.Generator | None = None,
                      dtype=np.float32) -> tuple[MLP, MLP]:
    if dec_spec.in_dim != enc_spec.out_dim:
        raise ValueError(f"decoder input dim {dec_spec.in_dim} != encoder code dim "
                         f"{enc_spec.out_dim}")
    if dec_spec.out_dim != enc_spec.in_dim:
        raise ValueError(f"decoder output dim {dec_spec.out_dim} != encoder input dim "
                         f"{enc_spec.in_dim}")
    enc = MLP(enc_spec, rng, prefix="E", dtype=dtype)
    dec = MLP(dec_spec, rng, prefix="Dec", dtype=dtype)
    return enc, dec


@dataclass
class DiscOutput:
    h1: Tensor | None
    h2: Tensor
    logit: Tensor
    y: Tensor


class RFDiscriminator:
    """Discriminator body plus an optional frozen encoder feeding a shared head.

    ``head="sigmoid"`` gives Y in (0, 1) for the log and least-squares losses;
    ``head="linear"`` gives raw critic scores for the Wasserstein loss.
    """

    def __init__(self, body: NetworkSpec, encoder: MLP | None = None,
                 rng: np.random.Generator | None = None, head: str = "sigmoid",
                 dtype=np.float32):
        if head not in ("sigmoid", "linear"):
            raise ValueError(f"head must be 'sigmoid' or 'linear', got {head!r}")
        if encoder is not None:
            if encoder.trainable or any(p.trainable for p in encoder.parameters()):
                raise ValueError("the encoder must be frozen before it joins a discriminator")
            if encoder.spec.in_dim != body.in_dim:
                raise ValueError(f"encoder input dim {encoder.spec.in_dim} != discriminator "
                                 f"input dim {body.in_dim}")
        self.head = head
        self.body = MLP(body, rng, prefix="D", dtype=dtype)
        self.encoder = encoder
        d1 = encoder.spec.out_dim if encoder is not None else 0
        d2 = body.out_dim
        fan_in = d1 + d2
        if rng is None:
            w2, b, w1 = np.zeros((d2, 1), dtype), np.zeros((1,), dtype), np.zeros((d1, 1), dtype)
        else:
            w2 = _uniform_init(rng, fan_in, (d2, 1), dtype)
            b = _uniform_init(rng, fan_in, (1,), dtype)
            w1 = _uniform_init(rng, fan_in, (d1, 1), dtype) if d1 else None
        self.w2 = Parameter(w2, name="head.w2")
        self.bias = Parameter(b, name="head.bias")
        self.w1 = Parameter(w1, name="head.w1") if d1 else None

    @property
    def d1(self) -> int:
        return 0 if self.w1 is None else self.w1.shape[0]

    @property
    def d2(self) -> int:
        return self.w2.shape[0]

    @property
    def in_dim(self) -> int:
        return self.body.spec.in_dim

    def features(self, x) -> tuple[Tensor | None, Tensor]:
        x = as_tensor(x)
        h2 = self.body(x)
        h1 = self.encoder(x) if self.encoder is not None else None
        return h1, h2

    def forward(self, x) -> DiscOutput:
        h1, h2 = self.features(x)
        logit = linear(h2, self.w2, self.bias)
        if h1 is not None:
            logit = logit + h1 @ self.w1
        y = sigmoid(logit) if self.head == "sigmoid" else logit
        return DiscOutput(h1, h2, logit, y)

    def __call__(self, x) -> Tensor:
        return self.forward(x).y

    def parameters(self) -> list[Parameter]:
        """Trainable parameters only; the encoder is excluded."""
        head = [self.w2, self.bias] + ([self.w1] if self.w1 is not None else [])
        return self.body.parameters() + head

    def head_parameters(self) -> list[Parameter]:
        return [p for p in (self.w1, self.w2, self.bias) if p is not None]

    def state_dict(self) -> dict[str, np.ndarray]:
        state = self.body.state_dict()
        state.update({p.name: p.data for p in self.head_parameters()})
        if self.encoder is not None:
            state.update(self.encoder.state_dict())
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        self.body.load_state_dict(state)
        for p in self.head_parameters():
            p.assign(state[p.name])
        if self.encoder is not None:
            self.encoder.load_state_dict(state)

    def graph(self) -> ComputeGraph:
        def fn(x):
            out = self.forward(x)
            named = {"h2": out.h2, "logit": out.logit, "y": out.y}
            if out.h1 is not None:
                named["h1"] = out.h1
            return named
        params = self.parameters() + (self.encoder.parameters() if self.encoder else [])
        return ComputeGraph(fn, {"x": (None, self.in_dim)}, params)


def rf_discriminator_forward(D: RFDiscriminator, x) -> tuple[Tensor | None, Tensor, Tensor]:
    out = D.forward(x)
    return out.h1, out.h2, out.y
