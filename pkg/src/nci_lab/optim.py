"""SGD and Adam updates over ``ModelParams``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import ModelParams


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str, max_abs: float):
        super().__init__(f"non-finite gradient in {name} (max |g| = {max_abs})")
        self.name = name
        self.max_abs = max_abs


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"optimizer kind must be sgd or adam, got {self.kind!r}")
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")


def optimizer_step(params: ModelParams, grads: dict[str, np.ndarray], state: OptimizerState) -> ModelParams:
    """Return updated parameters; ``state`` moments and step counter advance in place."""
    arrays = params.named_arrays()
    for name, p in arrays.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            finite = np.abs(g[np.isfinite(g)])
            raise NonFiniteGradient(name, float(finite.max()) if finite.size else float("nan"))
    state.step += 1
    out = {}
    if state.kind == "sgd":
        for name, p in arrays.items():
            out[name] = p - state.lr * grads[name]
        return params.with_arrays(out)

    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in arrays.items():
        g = grads[name]
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        out[name] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params.with_arrays(out)
