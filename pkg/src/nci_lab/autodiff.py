"""Dense float64 tensors with a reverse-mode tape.

Every forward operation appends a node to the tape that produced its inputs.
``Tape.backward`` walks the nodes in reverse recording order, so each node is
visited once and gradients accumulate into per-node buffers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

PROB_CLAMP = 1e-12


class ShapeError(ValueError):
    """Operands of a forward operation have incompatible shapes."""


class BackwardError(RuntimeError):
    """Backward was requested from a node that is not a scalar."""


@dataclass
class Node:
    op: str
    inputs: tuple[int, ...]
    saved: tuple = ()
    requires_grad: bool = True


class Tensor:
    __slots__ = ("data", "tape", "id", "name", "grad")

    def __init__(self, data: np.ndarray, tape: "Tape", node_id: int, name: str | None = None):
        self.data = data
        self.tape = tape
        self.id = node_id
        self.name = name
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, node={self.id})"

    def __add__(self, other):
        return add(self, _lift(self.tape, other))

    def __radd__(self, other):
        return add(_lift(self.tape, other), self)

    def __mul__(self, other):
        return mul(self, _lift(self.tape, other))

    def __rmul__(self, other):
        return mul(_lift(self.tape, other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_lift(self.tape, other), -1.0))


def _lift(tape: "Tape", value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return tape.constant(value)


@dataclass
class Tape:
    """Ordered record of forward operations.

    Node ids are list positions, so inputs always precede their consumers.
    """

    nodes: list[Node] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)
    leaves: dict[int, Tensor] = field(default_factory=dict)

    def _push(self, node: Node, value: np.ndarray, name: str | None = None) -> Tensor:
        self.nodes.append(node)
        self.values.append(value)
        return Tensor(value, self, len(self.nodes) - 1, name)

    def leaf(self, data, name: str | None = None) -> Tensor:
        value = np.array(data, dtype=np.float64)
        t = self._push(Node("leaf", ()), value, name)
        self.leaves[t.id] = t
        return t

    def constant(self, data) -> Tensor:
        value = np.asarray(data, dtype=np.float64)
        return self._push(Node("const", (), requires_grad=False), value)

    def record(self, op: str, inputs: Sequence[Tensor], value: np.ndarray, saved: tuple = ()) -> Tensor:
        for t in inputs:
            if t.tape is not self:
                raise ValueError(f"{op}: operand {t!r} belongs to a different tape")
        needs = any(self.nodes[t.id].requires_grad for t in inputs)
        return self._push(Node(op, tuple(t.id for t in inputs), saved, needs), value)

    def backward(self, root: Tensor) -> dict[int, np.ndarray]:
        """Populate ``.grad`` on every leaf of this tape and return them keyed by node id.

        Leaves that the root does not depend on receive zeros.
        """
        if root.data.size != 1 or root.data.ndim > 1:
            raise BackwardError(f"backward root must be a scalar, got shape {root.shape}")
        grads: dict[int, np.ndarray] = {root.id: np.ones_like(root.data)}
        for nid in range(root.id, -1, -1):
            g = grads.pop(nid, None) if self.nodes[nid].op != "leaf" else grads.get(nid)
            node = self.nodes[nid]
            if g is None or not node.requires_grad or not node.inputs:
                continue
            in_vals = [self.values[i] for i in node.inputs]
            in_grads = VJP[node.op](g, self.values[nid], in_vals, node.saved)
            for i, gi in zip(node.inputs, in_grads):
                if gi is None or not self.nodes[i].requires_grad:
                    continue
                if i in grads:
                    grads[i] = grads[i] + gi
                else:
                    grads[i] = gi
        out = {}
        for nid, leaf in self.leaves.items():
            g = grads.get(nid)
            leaf.grad = np.zeros_like(leaf.data) if g is None else g
            out[nid] = leaf.grad
        return out


# ---------------------------------------------------------------- forward ops


def _broadcast_kind(op: str, a: np.ndarray, b: np.ndarray) -> str:
    if a.shape == b.shape:
        return "same"
    if a.ndim >= 1 and a.shape[1:] == b.shape:
        return "b_batched"
    if b.ndim >= 1 and b.shape[1:] == a.shape:
        return "a_batched"
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ beyond a leading batch dimension")


def _unbroadcast(g: np.ndarray, kind: str, which: str) -> np.ndarray:
    if (kind == "b_batched" and which == "b") or (kind == "a_batched" and which == "a"):
        return g.sum(axis=0)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    kind = _broadcast_kind("add", a.data, b.data)
    return a.tape.record("add", (a, b), a.data + b.data, (kind,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    kind = _broadcast_kind("mul", a.data, b.data)
    return a.tape.record("mul", (a, b), a.data * b.data, (kind,))


def scale(a: Tensor, c: float) -> Tensor:
    return a.tape.record("scale", (a,), a.data * c, (float(c),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: expected 2-D @ 1/2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    return a.tape.record("matmul", (a, b), a.data @ b.data)


def relu(a: Tensor) -> Tensor:
    return a.tape.record("relu", (a,), np.maximum(a.data, 0.0))


def tanh(a: Tensor) -> Tensor:
    return a.tape.record("tanh", (a,), np.tanh(a.data))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so no overflow
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: Tensor) -> Tensor:
    return a.tape.record("sigmoid", (a,), _sigmoid(a.data))


def log(a: Tensor) -> Tensor:
    clamped = np.maximum(a.data, PROB_CLAMP)
    return a.tape.record("log", (a,), np.log(clamped), (clamped,))


def softmax_xent(logits: Tensor, labels) -> Tensor:
    """Per-row cross-entropy of integer ``labels`` under ``softmax(logits)``."""
    z = logits.data
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise ShapeError(f"softmax_xent: logits {z.shape} vs labels {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= z.shape[1]):
        raise ValueError(f"softmax_xent: labels outside [0, {z.shape[1]})")
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    rows = np.arange(z.shape[0])
    loss = lse - z[rows, y]
    probs = np.exp(z - lse[:, None])
    return logits.tape.record("softmax_xent", (logits,), loss, (probs, y))


def bce(p: Tensor, y) -> Tensor:
    """Elementwise binary cross-entropy with probabilities clamped away from 0 and 1."""
    target = np.broadcast_to(np.asarray(y, dtype=np.float64), p.shape)
    pc = np.clip(p.data, PROB_CLAMP, 1.0 - PROB_CLAMP)
    # clamp each log argument itself: 1 - (1 - 1e-12) is not 1e-12 in floating point
    loss = -(target * np.log(np.maximum(p.data, PROB_CLAMP)) + (1.0 - target) * np.log(np.maximum(1.0 - p.data, PROB_CLAMP)))
    return p.tape.record("bce", (p,), loss, (pc, target))


def sum_all(a: Tensor) -> Tensor:
    return a.tape.record("sum", (a,), np.asarray(a.data.sum()))


def mean(a: Tensor) -> Tensor:
    return a.tape.record("mean", (a,), np.asarray(a.data.mean()))


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Join two batches of row vectors feature-wise."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat: cannot join {a.shape} and {b.shape} along features")
    return a.tape.record("concat", (a, b), np.concatenate([a.data, b.data], axis=1), (a.shape[1],))


# ---------------------------------------------------------------- backward rules


def _vjp_add(g, out, ins, saved):
    (kind,) = saved
    return _unbroadcast(g, kind, "a"), _unbroadcast(g, kind, "b")


def _vjp_mul(g, out, ins, saved):
    (kind,) = saved
    a, b = ins
    return _unbroadcast(g * b, kind, "a"), _unbroadcast(g * a, kind, "b")


def _vjp_matmul(g, out, ins, saved):
    a, b = ins
    if b.ndim == 1:
        return np.outer(g, b), a.T @ g
    return g @ b.T, a.T @ g


def _vjp_softmax_xent(g, out, ins, saved):
    probs, y = saved
    d = probs.copy()
    d[np.arange(len(y)), y] -= 1.0
    return (d * g[:, None],)


def _vjp_bce(g, out, ins, saved):
    pc, target = saved
    return (g * (-target / pc + (1.0 - target) / (1.0 - pc)),)


def _vjp_concat(g, out, ins, saved):
    (k,) = saved
    return g[:, :k], g[:, k:]


VJP: dict[str, Callable] = {
    "add": _vjp_add,
    "mul": _vjp_mul,
    "scale": lambda g, out, ins, saved: (g * saved[0],),
    "matmul": _vjp_matmul,
    "relu": lambda g, out, ins, saved: (g * (ins[0] > 0),),
    "tanh": lambda g, out, ins, saved: (g * (1.0 - out * out),),
    "sigmoid": lambda g, out, ins, saved: (g * out * (1.0 - out),),
    "log": lambda g, out, ins, saved: (g * (ins[0] > PROB_CLAMP) / saved[0],),
    "softmax_xent": _vjp_softmax_xent,
    "bce": _vjp_bce,
    "sum": lambda g, out, ins, saved: (np.broadcast_to(g, ins[0].shape).copy(),),
    "mean": lambda g, out, ins, saved: (np.broadcast_to(g / max(ins[0].size, 1), ins[0].shape).copy(),),
    "concat": _vjp_concat,
}

FORWARD: dict[str, Callable] = {
    "add": add,
    "mul": mul,
    "matmul": matmul,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "log": log,
    "softmax_xent": softmax_xent,
    "bce": bce,
}


def forward_op(op: str, *inputs, **kwargs) -> Tensor:
    try:
        fn = FORWARD[op]
    except KeyError:
        raise ValueError(f"unknown operation {op!r}; expected one of {sorted(FORWARD)}") from None
    return fn(*inputs, **kwargs)
