"""Empirical H-divergence, proxy A-distance, and closed-form bound calculators.

The empirical divergence between representation sets S and T under a
discriminator family H is

    d_hat = 2 * (1 - min_{eta in H} [ P_S(eta = 0) + P_T(eta = 1) ])

For a family closed under complement the bracketed minimum is at most 1, so
``d_hat`` lies in [0, 2]: 0 when no member tells the sets apart and 2 when one
member separates them perfectly.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import autodiff as ad
from .data import Dataset
from .nn import init_mlp
from .optim import OptimizerState, optimizer_step


class DivergenceError(ValueError):
    pass


@dataclass(frozen=True)
class Threshold:
    """``polarity=+1``: 1 where x[axis] > t; ``polarity=-1``: 1 where x[axis] <= t."""

    axis: int
    threshold: float
    polarity: int

    def __call__(self, x: np.ndarray) -> np.ndarray:
        v = np.asarray(x, dtype=np.float64)
        v = v[:, self.axis] if v.ndim == 2 else v
        return (v > self.threshold).astype(np.int64) if self.polarity > 0 else (v <= self.threshold).astype(np.int64)

    def complement(self) -> "Threshold":
        return Threshold(self.axis, self.threshold, -self.polarity)


@dataclass
class HypothesisFamily:
    kind: Literal["axis_threshold_enumerated", "trained_mlp"] = "axis_threshold_enumerated"
    members: list[Threshold] = field(default_factory=list)

    @property
    def flip_closed(self) -> bool:
        have = set(self.members)
        return all(m.complement() in have for m in self.members)

    @classmethod
    def thresholds(cls, values, axes=(0,), both_polarities: bool = True) -> "HypothesisFamily":
        members = []
        for axis in axes:
            for t in values:
                members.append(Threshold(axis, float(t), 1))
                if both_polarities:
                    members.append(Threshold(axis, float(t), -1))
        return cls("axis_threshold_enumerated", members)

    @classmethod
    def covering(cls, *point_sets) -> "HypothesisFamily":
        """Every distinct axis cut of the pooled points, plus one below the minimum, both polarities."""
        pts = np.vstack([np.atleast_2d(np.asarray(p, dtype=np.float64).reshape(len(p), -1)) for p in point_sets])
        members = []
        for axis in range(pts.shape[1]):
            vals = np.unique(pts[:, axis])
            cuts = np.concatenate([[vals[0] - 1.0], vals])
            for t in cuts:
                members += [Threshold(axis, float(t), 1), Threshold(axis, float(t), -1)]
        return cls("axis_threshold_enumerated", members)


@dataclass
class DivergenceReport:
    d_hat: float
    epsilon: float
    a_distance: float
    mode: str
    n_source: int
    n_target: int
    flip_closed: bool = True
    source_term: float | None = None
    target_term: float | None = None
    witness: str | None = None

    def warning(self) -> str | None:
        if not self.flip_closed:
            return "family is not closed under complement; d_hat is reported raw and may leave [0, 2]"
        return None

    def to_text(self) -> str:
        rows = [(k, v) for k, v in self.__dict__.items()]
        warn = self.warning()
        if warn:
            rows.append(("warning", warn))
        return "".join(f"{k}: {_fmt(v)}\n" for k, v in rows)

    CSV_HEADER = "encoder,pair,mode,n_source,n_target,epsilon,d_hat,a_distance,flip_closed"

    def csv_row(self, encoder: str, pair: str) -> str:
        return ",".join(
            [encoder, pair, self.mode, str(self.n_source), str(self.n_target),
             _fmt(self.epsilon), _fmt(self.d_hat), _fmt(self.a_distance), str(self.flip_closed).lower()]
        )


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _as_rows(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if len(a) == 0:
        raise DivergenceError("divergence needs nonempty source and target sets")
    return a


def bracket_terms(h: Callable, source, target, source_event: int = 0, target_event: int = 1) -> tuple[float, float]:
    """(fraction of source with h = source_event, fraction of target with h = target_event)."""
    return float(np.mean(h(source) == source_event)), float(np.mean(h(target) == target_event))


def exact_h_divergence(source, target, family: HypothesisFamily) -> DivergenceReport:
    """Exhaustive minimum of the bracketed sum over an enumerated family."""
    s, t = _as_rows(source), _as_rows(target)
    if not family.members:
        raise DivergenceError("empty hypothesis family")
    best, arg = math.inf, None
    for h in family.members:
        a, b = bracket_terms(h, s, t)
        if a + b < best:
            best, arg = a + b, (h, a, b)
    h, a, b = arg
    return DivergenceReport(
        d_hat=2.0 * (1.0 - best),
        epsilon=best,
        a_distance=2.0 * (1.0 - best),
        mode="min_over_family",
        n_source=len(s),
        n_target=len(t),
        flip_closed=family.flip_closed,
        source_term=a,
        target_term=b,
        witness=f"axis={h.axis} threshold={h.threshold!r} polarity={h.polarity:+d}",
    )


def evaluate_fixed_discriminator(source, target, eta: Callable, source_event: int = 0, target_event: int = 1) -> DivergenceReport:
    """Bracketed sum of a single discriminator, no minimisation.

    ``source_event``/``target_event`` choose which predicted value each
    indicator counts; the defaults follow the formula above.
    """
    s, t = _as_rows(source), _as_rows(target)
    a, b = bracket_terms(eta, s, t, source_event, target_event)
    return DivergenceReport(
        d_hat=2.0 * (1.0 - (a + b)),
        epsilon=a + b,
        a_distance=2.0 * (1.0 - (a + b)),
        mode="fixed_discriminator",
        n_source=len(s),
        n_target=len(t),
        flip_closed=False,  # {eta} alone lacks its complement
        source_term=a,
        target_term=b,
    )


# ---------------------------------------------------------------- trained discriminator


class DiscConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    hidden: int = Field(16, ge=0)  # 0 = logistic regression
    epochs: int = Field(30, gt=0)
    lr: float = Field(5e-3, gt=0)
    batch_size: int = Field(64, gt=0)
    seed: int = 0
    min_per_domain: int = 100


def fit_domain_classifier(x: np.ndarray, d: np.ndarray, config: DiscConfig):
    """Class-balanced logistic MLP separating d=0 rows from d=1 rows."""
    rng = np.random.default_rng([config.seed, 30])
    if config.hidden:
        net = init_mlp([x.shape[1], config.hidden, 1], ["relu", "sigmoid"], "discriminator", rng)
    else:
        net = init_mlp([x.shape[1], 1], ["sigmoid"], "discriminator", rng)
    w = np.where(d == 1, 0.5 / max(d.sum(), 1), 0.5 / max((1 - d).sum(), 1)) * len(d)
    state = OptimizerState("adam", config.lr)
    for _ in range(config.epochs):
        order = rng.permutation(len(d))
        for start in range(0, len(d), config.batch_size):
            idx = order[start : start + config.batch_size]
            tape = ad.Tape()
            p = net.bind(tape)
            per = ad.bce(net.forward(tape.constant(x[idx]), p), d[idx, None])
            loss = ad.mean(ad.mul(per, tape.constant(w[idx, None])))
            tape.backward(loss)
            net = optimizer_step(net, {k: t.grad for k, t in p.items()}, state)
    return net


def _encode(encoder, x):
    if hasattr(encoder, "represent"):
        return encoder.represent(x)
    if hasattr(encoder, "predict"):
        return encoder.predict(x)
    return np.asarray(encoder(x), dtype=np.float64)


def trained_h_divergence(encoder, dataset: Dataset, target: str, config: DiscConfig | None = None) -> DivergenceReport:
    """Proxy divergence from a fresh discriminator on frozen representations.

    Source is every non-target domain. The discriminator trains on the train
    split; ``epsilon`` is its class-balanced error on the held-out split and
    ``a_distance = 2 (1 - epsilon)``. ``d_hat`` applies the empirical formula to
    the held-out predictions with the family {eta, not eta}.
    """
    config = config or DiscConfig()
    tmask = dataset.domain_mask(target)
    for name, cnt in dataset.counts().items():
        if 0 < cnt < config.min_per_domain:
            raise DivergenceError(f"domain {name!r} has {cnt} samples; need {config.min_per_domain}")
    if tmask.sum() < config.min_per_domain or (~tmask).sum() < config.min_per_domain:
        raise DivergenceError("trained divergence needs enough source and target samples")
    reps = _encode(encoder, dataset.features)
    d = tmask.astype(np.float64)
    held = dataset.eval_mask()
    net = fit_domain_classifier(reps[~held], d[~held], config)
    pred = (net.predict(reps[held])[:, 0] > 0.5).astype(np.int64)
    dh = d[held]
    src, tgt = pred[dh == 0], pred[dh == 1]
    err_s, err_t = float(np.mean(src == 1)), float(np.mean(tgt == 0))
    eps = 0.5 * (err_s + err_t)
    bracket = float(np.mean(src == 0)) + float(np.mean(tgt == 1))
    best = min(bracket, 2.0 - bracket)
    return DivergenceReport(
        d_hat=2.0 * (1.0 - best),
        epsilon=eps,
        a_distance=2.0 * (1.0 - eps),
        mode="min_over_family",
        n_source=len(src),
        n_target=len(tgt),
        source_term=float(np.mean(src == 0)),
        target_term=float(np.mean(tgt == 1)),
        witness=f"trained_mlp hidden={config.hidden} seed={config.seed}",
    )


# ---------------------------------------------------------------- bounds


class BoundInputs(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    source_risk: float = Field(ge=0)
    n: int = Field(gt=0)
    vc_dim: int = Field(ge=1)
    delta: float = Field(gt=0, lt=1)
    beta: float = Field(0.0, ge=0)
    d_hat: float = 0.0


def target_risk_bound(inputs: BoundInputs) -> float:
    """R_S + sqrt(4/n (d log(2en/d) + log(4/delta))) + d_hat + 4 sqrt(1/n (d log(2n/d) + log(4/delta))) + beta."""
    n, d, delta = inputs.n, inputs.vc_dim, inputs.delta
    if n <= d:
        raise DivergenceError(f"bound needs n > d, got n={n}, d={d}")
    first = math.sqrt(4.0 / n * (d * math.log(2.0 * math.e * n / d) + math.log(4.0 / delta)))
    second = 4.0 * math.sqrt(1.0 / n * (d * math.log(2.0 * n / d) + math.log(4.0 / delta)))
    # d_hat is added last so the bound is exactly affine in it: bound(x) == bound(0) + x
    return (inputs.source_risk + first + second + inputs.beta) + inputs.d_hat


def vc_surrogate(params) -> int:
    """Parameter count of a network, used in place of its VC dimension."""
    return int(params.num_parameters())


def _check_unit(name, v):
    if not 0 < v < 1:
        raise DivergenceError(f"{name} must lie in (0, 1), got {v}")


def haussler_epsilon(hypotheses: int, delta: float, m: int) -> float:
    """(ln|T| + ln(1/delta)) / M."""
    if hypotheses < 1:
        raise DivergenceError(f"|T| must be a positive integer, got {hypotheses}")
    if not 0 < delta <= 1:
        raise DivergenceError(f"delta must lie in (0, 1], got {delta}")
    if m < 1:
        raise DivergenceError(f"M must be positive, got {m}")
    return (math.log(hypotheses) + math.log(1.0 / delta)) / m


def haussler_sample_complexity(hypotheses: int, delta: float, epsilon: float) -> int:
    """Smallest M with (ln|T| + ln(1/delta)) / M <= epsilon."""
    if hypotheses < 1:
        raise DivergenceError(f"|T| must be a positive integer, got {hypotheses}")
    _check_unit("delta", delta)
    _check_unit("epsilon", epsilon)
    return max(1, math.ceil((math.log(hypotheses) + math.log(1.0 / delta)) / epsilon))


# ---------------------------------------------------------------- metric axioms


@dataclass
class MetricReport:
    distances: np.ndarray
    symmetric: bool
    positive: bool
    triangle_failures: list[tuple[int, int, int]]
    triples_checked: int

    @property
    def triangle(self) -> bool:
        return not self.triangle_failures

    def to_text(self) -> str:
        lines = [
            f"symmetry: {'pass' if self.symmetric else 'fail'}",
            f"positivity: {'pass' if self.positive else 'fail'}",
            f"triangle: {'pass' if self.triangle else 'fail'} ({self.triples_checked} triples)",
        ]
        lines += [f"triangle_failure: {a},{b},{c}" for a, b, c in self.triangle_failures]
        return "\n".join(lines) + "\n"


def metric_axiom_check(domains: list, family: HypothesisFamily) -> MetricReport:
    """Symmetry, positivity on disjoint supports, and the triangle inequality of d_hat."""
    if not family.flip_closed:
        raise DivergenceError("metric check needs a complement-closed family")
    sets = [_as_rows(s) for s in domains]
    k = len(sets)
    dist = np.zeros((k, k))
    for i, j in itertools.product(range(k), repeat=2):
        dist[i, j] = exact_h_divergence(sets[i], sets[j], family).d_hat
    positive = True
    for i, j in itertools.combinations(range(k), 2):
        a = {tuple(r) for r in sets[i]}
        b = {tuple(r) for r in sets[j]}
        if not (a & b) and dist[i, j] <= 0:
            positive = False
    failures, count = [], 0
    for i, j, l in itertools.permutations(range(k), 3):
        count += 1
        if dist[i, l] > dist[i, j] + dist[j, l] + 1e-12:
            failures.append((i, j, l))
    return MetricReport(dist, bool(np.array_equal(dist, dist.T)), positive, failures, count)
