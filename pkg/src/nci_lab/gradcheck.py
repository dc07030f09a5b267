"""Central finite-difference check of tape gradients on random MLPs."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .nn import ModelParams, init_mlp

FD_STEP = 1e-5
REL_FLOOR = 1e-6


def random_problem(seed: int) -> tuple[ModelParams, np.ndarray, np.ndarray, int]:
    """A random MLP classifier with random biases, a batch, and its labels."""
    rng = np.random.default_rng([seed, 40])
    depth = int(rng.integers(1, 4))
    dims = [int(rng.integers(2, 7)) for _ in range(depth)]
    classes = int(rng.integers(2, 5))
    acts = [str(rng.choice(["tanh", "sigmoid", "relu", "identity"])) for _ in range(depth - 1)] + ["identity"]
    net = init_mlp(dims + [classes], acts, "head", rng)
    net = net.with_arrays(
        {k: (v + 0.1 * rng.standard_normal(v.shape) if k.endswith("bias") else v) for k, v in net.named_arrays().items()}
    )
    x = rng.standard_normal((int(rng.integers(3, 9)), dims[0]))
    y = rng.integers(0, classes, size=len(x))
    return net, x, y, classes


def _loss(net: ModelParams, x, y) -> tuple[ad.Tape, dict, ad.Tensor]:
    tape = ad.Tape()
    p = net.bind(tape)
    return tape, p, ad.mean(ad.softmax_xent(net.forward(tape.constant(x), p), y))


def relative_errors(net: ModelParams, x, y, h: float = FD_STEP) -> dict[str, np.ndarray]:
    """Per-parameter ``|g - fd| / max(|g|, |fd|, floor)``."""
    tape, p, loss = _loss(net, x, y)
    tape.backward(loss)
    arrays = net.named_arrays()
    out = {}
    for name, arr in arrays.items():
        analytic = p[name].grad
        err = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            vals = []
            for sign in (1.0, -1.0):
                bumped = arr.copy()
                bumped[idx] += sign * h
                vals.append(_loss(net.with_arrays({**arrays, name: bumped}), x, y)[2].item())
            fd = (vals[0] - vals[1]) / (2 * h)
            g = analytic[idx]
            err[idx] = abs(g - fd) / max(abs(g), abs(fd), REL_FLOOR)
        out[name] = err
    return out


def max_relative_error(seed: int, h: float = FD_STEP) -> float:
    net, x, y, _ = random_problem(seed)
    return max(float(e.max()) for e in relative_errors(net, x, y, h).values())
