"""Multilayer perceptron parameters and their forward pass on a tape."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

ACTIVATIONS = {
    "relu": ad.relu,
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "identity": lambda t: t,
}
ROLES = ("encoder", "discriminator", "head")


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str = "identity"


@dataclass
class ModelParams:
    role: str
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        for i, (prev, nxt) in enumerate(zip(self.layers, self.layers[1:])):
            if prev.weight.shape[1] != nxt.weight.shape[0]:
                raise ad.ShapeError(
                    f"{self.role} layer {i + 1} expects {nxt.weight.shape[0]} inputs, previous emits {prev.weight.shape[1]}"
                )
        for i, layer in enumerate(self.layers):
            if layer.bias.shape != (layer.weight.shape[1],):
                raise ad.ShapeError(f"{self.role} layer {i}: bias {layer.bias.shape} vs weight {layer.weight.shape}")
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"{self.role} layer {i}: unknown activation {layer.activation!r}")

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].weight.shape[0]] + [l.weight.shape[1] for l in self.layers]

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    def num_parameters(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, l in enumerate(self.layers):
            out[f"{self.role}.{i}.weight"] = l.weight
            out[f"{self.role}.{i}.bias"] = l.bias
        return out

    def with_arrays(self, arrays: dict[str, np.ndarray]) -> "ModelParams":
        layers = [
            Layer(arrays[f"{self.role}.{i}.weight"], arrays[f"{self.role}.{i}.bias"], l.activation)
            for i, l in enumerate(self.layers)
        ]
        return ModelParams(self.role, layers)

    def copy(self) -> "ModelParams":
        return self.with_arrays({k: v.copy() for k, v in self.named_arrays().items()})

    def bind(self, tape: ad.Tape) -> dict[str, ad.Tensor]:
        """Register every array as a named leaf on ``tape``."""
        return {name: tape.leaf(arr, name) for name, arr in self.named_arrays().items()}

    def forward(self, x: ad.Tensor, bound: dict[str, ad.Tensor]) -> ad.Tensor:
        h = x
        for i, l in enumerate(self.layers):
            h = ad.add(ad.matmul(h, bound[f"{self.role}.{i}.weight"]), bound[f"{self.role}.{i}.bias"])
            h = ACTIVATIONS[l.activation](h)
        return h

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Tape-free forward pass for evaluation."""
        h = np.asarray(x, dtype=np.float64)
        for l in self.layers:
            h = h @ l.weight + l.bias
            if l.activation == "relu":
                h = np.maximum(h, 0.0)
            elif l.activation == "tanh":
                h = np.tanh(h)
            elif l.activation == "sigmoid":
                h = ad._sigmoid(h)
        return h


def init_mlp(dims: list[int], activations: list[str], role: str, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    if len(activations) != len(dims) - 1:
        raise ValueError(f"{len(dims) - 1} layers need as many activations, got {len(activations)}")
    layers = []
    for fan_in, fan_out, act in zip(dims, dims[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(Layer(rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out), act))
    return ModelParams(role, layers)
