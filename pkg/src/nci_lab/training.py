"""Encoder / head / discriminator training under ERM and the three adversarial objectives.

Domain labels: the target domain is 1, every other domain is 0.

Each batch runs ``disc_steps`` discriminator updates on frozen representations,
then one encoder+head update on ``task + adv_weight * adversarial``:

* ``erm``: no adversarial term.
* ``commutative``: minus the discriminator loss on every sample.
* ``conditional``: as commutative, discriminator also sees the one-hot class.
* ``nci``: ``-(1 - d) log eta`` so only source samples are pushed toward the
  target side; target samples contribute exactly zero.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import autodiff as ad
from .data import Dataset
from .nn import ModelParams, init_mlp
from .optim import OptimizerState, optimizer_step

Objective = Literal["erm", "commutative", "conditional", "nci"]
OBJECTIVES = ("erm", "commutative", "conditional", "nci")


class TrainConfigError(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    def __init__(self, message: str, curve: list[dict]):
        super().__init__(message + "\n" + curve_to_csv(curve))
        self.curve = curve


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    objective: Objective = "nci"
    target_domain: str | None = None
    lr: float = Field(2e-3, gt=0)
    disc_lr: float | None = Field(None, gt=0)
    epochs: int = Field(30, gt=0)
    batch_size: int = Field(64, gt=0)
    adv_weight: float = Field(1.0, ge=0)
    disc_steps: int = Field(1, ge=1)
    hidden: list[int] = Field(default_factory=lambda: [32, 16])
    disc_hidden: list[int] = Field(default_factory=lambda: [16])
    optimizer: Literal["sgd", "adam"] = "adam"
    seed: int = 0
    domains: list[str] | None = None  # restrict training to these domains


@dataclass
class TrainedModel:
    encoder: ModelParams
    head: ModelParams
    discriminator: ModelParams
    config: TrainConfig
    curve: list[dict] = field(default_factory=list)

    def represent(self, x: np.ndarray) -> np.ndarray:
        return self.encoder.predict(x)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.head.predict(self.encoder.predict(x))

    def predict_labels(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def config_hash(self) -> str:
        return hashlib.sha256(self.config.model_dump_json().encode()).hexdigest()[:16]


# ---------------------------------------------------------------- loss values


def _clamp(p):
    return np.clip(np.asarray(p, dtype=np.float64), ad.PROB_CLAMP, 1.0 - ad.PROB_CLAMP)


def discriminator_loss(eta, domain_label):
    """Binary cross-entropy of the discriminator output against the domain label."""
    p, y = np.asarray(eta, dtype=np.float64), np.asarray(domain_label, dtype=np.float64)
    return -(y * np.log(np.maximum(p, ad.PROB_CLAMP)) + (1.0 - y) * np.log(np.maximum(1.0 - p, ad.PROB_CLAMP)))


def nci_encoder_loss(eta, domain_label):
    """``-(1 - y) log eta``: zero for target samples, pulls source samples toward eta = 1."""
    p, y = _clamp(eta), np.asarray(domain_label, dtype=np.float64)
    return np.where(y == 1.0, 0.0, -(1.0 - y) * np.log(p))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def risk_from_probs(probs: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Mean cross-entropy and 0/1 error of class probabilities."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("empirical risk of an empty sample list is undefined")
    p = np.clip(probs[np.arange(len(labels)), labels], ad.PROB_CLAMP, 1.0)
    return float(np.mean(-np.log(p))), float(np.mean(np.argmax(probs, axis=1) != labels))


def empirical_risk(model, features: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Mean cross-entropy of head(encoder(x)) and its 0/1 error."""
    if len(labels) == 0:
        raise ValueError("empirical risk of an empty sample list is undefined")
    return risk_from_probs(softmax(model.logits(features)), labels)


# ---------------------------------------------------------------- training


def domain_labels(dataset: Dataset, target: str | None) -> np.ndarray:
    if target is None:
        return np.zeros(len(dataset))
    return (dataset.domain_idx == dataset.index_of(target)).astype(np.float64)


def _init_models(dim: int, num_classes: int, config: TrainConfig):
    rng = np.random.default_rng([config.seed, 10])
    enc_dims = [dim] + list(config.hidden)
    encoder = init_mlp(enc_dims, ["relu"] * len(config.hidden), "encoder", rng)
    head = init_mlp([enc_dims[-1], num_classes], ["identity"], "head", rng)
    disc_in = enc_dims[-1] + (num_classes if config.objective == "conditional" else 0)
    drng = np.random.default_rng([config.seed, 11])
    disc_dims = [disc_in] + list(config.disc_hidden) + [1]
    discriminator = init_mlp(
        disc_dims, ["relu"] * len(config.disc_hidden) + ["sigmoid"], "discriminator", drng
    )
    return encoder, head, discriminator


def _disc_input(tape, rep, y, num_classes, conditional):
    if not conditional:
        return rep
    return ad.concat(rep, tape.constant(np.eye(num_classes)[y]))


def adversarial_term(objective: str, tape: ad.Tape, eta: ad.Tensor, d: np.ndarray) -> ad.Tensor:
    """Per-sample adversarial loss on the tape for the encoder update."""
    if objective in ("commutative", "conditional"):
        return ad.scale(ad.bce(eta, d), -1.0)
    if objective == "nci":
        # bce against 1 is -log eta; the (1 - d) mask zeroes target rows exactly
        return ad.mul(ad.bce(eta, np.ones_like(d)), tape.constant(1.0 - d))
    raise ValueError(f"no adversarial term for objective {objective!r}")


def _check_config(dataset: Dataset, train: Dataset, config: TrainConfig):
    if config.objective != "erm":
        if config.target_domain is None:
            raise TrainConfigError(f"objective {config.objective!r} needs a target_domain")
        if config.target_domain not in dataset.domains:
            raise TrainConfigError(f"target domain {config.target_domain!r} not in {dataset.domains}")
    for c in np.unique(train.labels):
        if (train.labels == c).sum() < config.batch_size / dataset.num_classes:
            raise TrainConfigError(f"class {c} has fewer than batch_size/C training samples")


def train(dataset: Dataset, config: TrainConfig, split: str = "train") -> TrainedModel:
    data = dataset.split(split)
    if config.domains is not None:
        keep = np.isin(data.domain_idx, [dataset.index_of(d) for d in config.domains])
        data = data.subset(keep)
    _check_config(dataset, data, config)
    if len(data) == 0:
        raise TrainConfigError("no training samples")

    C = dataset.num_classes
    encoder, head, disc = _init_models(dataset.dim, C, config)
    opt_main = OptimizerState(config.optimizer, config.lr)
    opt_head = OptimizerState(config.optimizer, config.lr)
    opt_disc = OptimizerState(config.optimizer, config.disc_lr or config.lr)
    batch_rng = np.random.default_rng([config.seed, 12])
    adversarial = config.objective != "erm"
    conditional = config.objective == "conditional"
    d_all = domain_labels(data, config.target_domain if adversarial else None)
    x_all, y_all = data.features, data.labels
    n = len(data)
    curve: list[dict] = []

    for epoch in range(config.epochs):
        order = batch_rng.permutation(n)
        sums = {"task_loss": 0.0, "adv_loss": 0.0, "disc_loss": 0.0}
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb, db = x_all[idx], y_all[idx], d_all[idx]
            m = len(idx)

            if adversarial:
                rep_np = encoder.predict(xb)
                for _ in range(config.disc_steps):
                    tape = ad.Tape()
                    dp = disc.bind(tape)
                    inp = _disc_input(tape, tape.constant(rep_np), yb, C, conditional)
                    dloss = ad.mean(ad.bce(disc.forward(inp, dp), db[:, None]))
                    tape.backward(dloss)
                    disc = optimizer_step(disc, {k: t.grad for k, t in dp.items()}, opt_disc)
                sums["disc_loss"] += dloss.item() * m

            tape = ad.Tape()
            ep, hp = encoder.bind(tape), head.bind(tape)
            rep = encoder.forward(tape.constant(xb), ep)
            logits = head.forward(rep, hp)
            task = ad.mean(ad.softmax_xent(logits, yb))
            total = task
            if adversarial and config.adv_weight > 0:
                dp = disc.bind(tape)
                eta = disc.forward(_disc_input(tape, rep, yb, C, conditional), dp)
                adv = ad.mean(adversarial_term(config.objective, tape, eta, db[:, None]))
                total = ad.add(task, ad.scale(adv, config.adv_weight))
                sums["adv_loss"] += adv.item() * m
            if not np.isfinite(total.item()):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", curve)
            tape.backward(total)
            encoder = optimizer_step(encoder, {k: t.grad for k, t in ep.items()}, opt_main)
            head = optimizer_step(head, {k: t.grad for k, t in hp.items()}, opt_head)
            sums["task_loss"] += task.item() * m
            correct += int(np.sum(np.argmax(logits.data, axis=1) == yb))

        row = {"epoch": epoch, **{k: v / n for k, v in sums.items()}, "train_acc": correct / n}
        if not all(np.isfinite(v) for v in row.values()):
            raise TrainingDiverged(f"non-finite curve value at epoch {epoch}", curve + [row])
        curve.append(row)
    return TrainedModel(encoder, head, disc, config, curve)


def evaluate(model: TrainedModel, dataset: Dataset, domain: str, split: str = "eval") -> tuple[float, float]:
    """(accuracy, cross-entropy risk) on one domain's split."""
    part = dataset.split(split)
    mask = part.domain_mask(domain)
    if not mask.any():
        raise ValueError(f"domain {domain!r} has no samples in the {split} split")
    risk, err = empirical_risk(model, part.features[mask], part.labels[mask])
    return 1.0 - err, risk


# ---------------------------------------------------------------- plain classifiers


@dataclass
class Classifier:
    net: ModelParams

    def logits(self, x):
        return self.net.predict(x)

    def predict_labels(self, x):
        return np.argmax(self.net.predict(x), axis=1)


def fit_classifier(
    x: np.ndarray, y: np.ndarray, num_classes: int, hidden: int = 16, epochs: int = 40,
    seed: int = 0, lr: float = 5e-3, batch_size: int = 64,
) -> Classifier:
    """One-hidden-layer softmax classifier trained with Adam on (x, y)."""
    rng = np.random.default_rng([seed, 20])
    net = init_mlp([x.shape[1], hidden, num_classes], ["relu", "identity"], "head", rng)
    state = OptimizerState("adam", lr)
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            idx = order[start : start + batch_size]
            tape = ad.Tape()
            p = net.bind(tape)
            loss = ad.mean(ad.softmax_xent(net.forward(tape.constant(x[idx]), p), y[idx]))
            tape.backward(loss)
            net = optimizer_step(net, {k: t.grad for k, t in p.items()}, state)
    return Classifier(net)


# ---------------------------------------------------------------- files


def curve_to_csv(curve: list[dict]) -> str:
    lines = ["epoch,task_loss,adv_loss,disc_loss,train_acc"]
    for r in curve:
        lines.append(
            f"{r['epoch']},{r['task_loss']:.9g},{r['adv_loss']:.9g},{r['disc_loss']:.9g},{r['train_acc']:.9g}"
        )
    return "\n".join(lines) + "\n"


def save_checkpoint(model: TrainedModel, path) -> None:
    """JSON header line, then one float per line in repr form (exact round trip)."""
    parts = [model.encoder, model.head, model.discriminator]
    header = {
        "format": "nci-lab-checkpoint/1",
        "config_hash": model.config_hash(),
        "config": model.config.model_dump(mode="json"),
        "models": [
            {"role": p.role, "dims": p.dims, "activations": [l.activation for l in p.layers]} for p in parts
        ],
    }
    body = []
    for p in parts:
        for arr in p.named_arrays().values():
            body.extend(repr(float(v)) for v in arr.ravel())
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write("\n".join(body) + "\n")


def load_checkpoint(path) -> TrainedModel:
    from .nn import Layer

    with open(path) as fh:
        header = json.loads(fh.readline())
        flat = np.array([float(line) for line in fh if line.strip()])
    pos, models = 0, []
    for spec in header["models"]:
        layers = []
        for a, b, act in zip(spec["dims"], spec["dims"][1:], spec["activations"]):
            w = flat[pos : pos + a * b].reshape(a, b)
            pos += a * b
            bias = flat[pos : pos + b]
            pos += b
            layers.append(Layer(w, bias, act))
        models.append(ModelParams(spec["role"], layers))
    if pos != len(flat):
        raise ValueError(f"{path}: body has {len(flat)} values, header describes {pos}")
    return TrainedModel(*models, TrainConfig(**header["config"]))
