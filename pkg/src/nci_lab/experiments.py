"""Desk-scale studies: the asymmetric benchmark, the complementarity sweep,
asymmetry discovery and the risk-ordering study, plus report rendering.

Every number is a pure function of the study spec and its seeds. Cells are
independent, so ``jobs > 1`` runs them in worker processes; aggregation waits
for all of them and sorts cells into a fixed order before anything is written.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.stats import spearmanr

from .data import Dataset
from .divergence import DiscConfig, trained_h_divergence
from .synth import DatasetConfig, DomainSpec, assign_supports, interpolate_domains, render
from .training import TrainConfig, evaluate, fit_classifier, train

log = logging.getLogger(__name__)

# ---------------------------------------------------------------- the benchmark

BENCH_BLOCK_DIM = 8
BENCH_BLOCK_NOISE = 1.75


def benchmark_config(seed: int, num_classes: int = 8) -> DatasetConfig:
    """Two domains, 30% unique supports each, 2000 renderings per domain.

    The target leaks the label into its own block and has a clean concept; the
    source has a noisy concept and no leak.
    """
    return DatasetConfig(
        seed=seed,
        concept_dim=8,
        num_classes=num_classes,
        num_supports=2857,
        shared_fraction=0.4,
        unique_fraction=0.3,
        domains=[
            DomainSpec(name="target", label_leak=2.0, block_dim=BENCH_BLOCK_DIM, block_noise=BENCH_BLOCK_NOISE),
            DomainSpec(name="source", concept_noise=1.5, block_dim=BENCH_BLOCK_DIM, block_noise=BENCH_BLOCK_NOISE),
        ],
    )


def benchmark_train_config(objective: str, seed: int, target: str = "target") -> TrainConfig:
    return TrainConfig(
        objective=objective,
        target_domain=None if objective == "erm" else target,
        seed=seed,
        epochs=20,
        adv_weight=10.0,
        hidden=[16],
        disc_hidden=[16],
    )


@dataclass
class Cell:
    study: str
    objective: str
    x: float
    seed: int
    accuracy: float
    risk: float
    d_hat: float = float("nan")
    train_count: int = 0

    def key(self):
        return (self.study, self.objective, self.x, self.seed)


def benchmark_cell(objective: str, seed: int, with_divergence: bool = True) -> Cell:
    ds = _generate(benchmark_config(seed))
    model = train(ds, benchmark_train_config(objective, seed))
    acc, risk = evaluate(model, ds, "target")
    d_hat = trained_h_divergence(model, ds, "target", DiscConfig(seed=seed)).d_hat if with_divergence else float("nan")
    return Cell("benchmark", objective, 0.0, seed, acc, risk, d_hat, len(ds.split("train")))


def _generate(config: DatasetConfig) -> Dataset:
    return render(config, assign_supports(config))


# ---------------------------------------------------------------- reports


@dataclass
class StudyReport:
    name: str
    cells: list[Cell]
    verdicts: dict[str, bool] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    x_label: str = "x"

    def objectives(self) -> list[str]:
        return sorted({c.objective for c in self.cells})

    def xs(self) -> list[float]:
        return sorted({c.x for c in self.cells})

    def values(self, objective: str, metric: str = "accuracy") -> np.ndarray:
        """(len(xs), len(seeds)) array of a metric, seeds in ascending order."""
        seeds = sorted({c.seed for c in self.cells})
        table = {(c.x, c.seed): getattr(c, metric) for c in self.cells if c.objective == objective}
        return np.array([[table.get((x, s), np.nan) for s in seeds] for x in self.xs()])

    def aggregate(self, metric: str = "accuracy") -> dict[str, tuple[np.ndarray, np.ndarray]]:
        out = {}
        for obj in self.objectives():
            v = self.values(obj, metric)
            out[obj] = (np.nanmean(v, axis=1), np.nanstd(v, axis=1))
        return out


def _run_cells(fn, jobs_args: list[tuple], jobs: int) -> list[Cell]:
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(fn, *zip(*jobs_args)))
    else:
        cells = [fn(*a) for a in jobs_args]
    return sorted(cells, key=Cell.key)


def benchmark_study(seeds=range(10), jobs: int = 1) -> StudyReport:
    args = [(obj, s) for obj in ("commutative", "nci") for s in seeds]
    report = StudyReport("benchmark", _run_cells(benchmark_cell, args, jobs), x_label="seed")
    report.verdicts.update(benchmark_verdicts(report.cells))
    report.config = {
        "seeds": list(seeds),
        "dataset": benchmark_config(0).model_dump(mode="json"),
        "train": {o: benchmark_train_config(o, 0).model_dump(mode="json") for o in ("commutative", "nci")},
    }
    return report


def benchmark_verdicts(cells: list[Cell]) -> dict[str, bool]:
    by = {(c.objective, c.seed): c for c in cells}
    seeds = sorted({s for o, s in by if o == "nci"})
    acc_gap = [by["nci", s].accuracy - by["commutative", s].accuracy for s in seeds]
    dh_wins = sum(by["nci", s].d_hat < by["commutative", s].d_hat for s in seeds)
    need = int(np.ceil(0.8 * len(seeds)))
    return {
        "nci_accuracy_gap_at_least_2_points": float(np.mean(acc_gap)) >= 0.02,
        "nci_accuracy_wins_per_seed": sum(g > 0 for g in acc_gap) >= need,
        "nci_lower_divergence_per_seed": dh_wins >= int(np.ceil(0.9 * len(seeds))),
    }


# ---------------------------------------------------------------- complementarity sweep

DEFAULT_GRID = tuple(round(0.05 * i, 2) for i in range(1, 11))


class SweepSpec(BaseModel):
    """Complementarity sweep.

    ``base`` must hold exactly two domains: ``target`` and the complementary
    source. The ``num_supports`` training supports are split in half; the
    target trains on the first half. At fraction f the complementary source
    trains on the same first half minus ``q = round(f * total)`` supports plus
    ``q`` supports from the second half, so both train sets keep a fixed size.
    The target is tested on ``test_supports`` fresh supports no domain trains on.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    base: DatasetConfig
    target: str = "target"
    complementary_source: str = "source"
    grid: list[float] = Field(default_factory=lambda: list(DEFAULT_GRID))
    seeds: list[int] = Field(default_factory=lambda: list(range(10)))
    objectives: list[str] = Field(default_factory=lambda: ["nci"])
    test_supports: int = Field(2000, gt=0)
    train: TrainConfig = Field(default_factory=lambda: TrainConfig(epochs=20, hidden=[16], adv_weight=1.0))

    @field_validator("grid")
    @classmethod
    def _grid(cls, v):
        if not v:
            raise ValueError("grid must not be empty")
        for f in v:
            if not 0 < f < 1:
                raise ValueError(f"grid values must lie in (0, 1), got {f}")
        return v


def default_sweep_spec() -> SweepSpec:
    """A concept space wide enough (32-d) that 150 target supports leave it under-sampled."""
    base = DatasetConfig(
        seed=0,
        concept_dim=32,
        num_classes=4,
        num_supports=300,
        domains=[
            DomainSpec(name="target", label_leak=0.0, block_dim=4, block_noise=1.0),
            DomainSpec(name="source", concept_noise=0.25, block_dim=4, block_noise=1.0),
        ],
    )
    return SweepSpec(base=base, train=TrainConfig(epochs=100, hidden=[16], adv_weight=1.0))


def sweep_supports(spec: SweepSpec, fraction: float):
    """(assignment, test support ids) for one grid point; raises ValueError if infeasible."""
    pool = np.arange(spec.base.num_supports)
    test = np.arange(spec.base.num_supports, spec.base.num_supports + spec.test_supports)
    half = len(pool) // 2
    q = int(round(fraction * 2 * half))
    if q > half:
        raise ValueError(f"fraction {fraction} needs {q} complementary supports, only {half} available")
    shared, extra = pool[:half], pool[half : 2 * half]
    source = np.concatenate([shared[q:], extra[:q]])
    return {spec.target: shared, spec.complementary_source: source}, test


def sweep_cell(spec: SweepSpec, objective: str, fraction: float, seed: int) -> Cell:
    config = spec.base.model_copy(update={"seed": seed})
    assignment, test_ids = sweep_supports(spec, fraction)
    train_set = render(config, assignment)
    test_set = render(config, {spec.target: test_ids}, noise_stream=1)
    tc = spec.train.model_copy(
        update={"objective": objective, "seed": seed, "target_domain": None if objective == "erm" else spec.target}
    )
    model = train(train_set, tc, split="all")
    acc, risk = evaluate(model, test_set, spec.target, split="all")
    return Cell("complementarity", objective, float(fraction), seed, acc, risk, train_count=len(train_set))


def complementarity_sweep(spec: SweepSpec, jobs: int = 1) -> StudyReport:
    notes, grid = [], []
    for f in spec.grid:
        try:
            sweep_supports(spec, f)
            grid.append(f)
        except ValueError as exc:
            notes.append(f"skipped fraction {f}: {exc}")
    args = [(spec, o, f, s) for o in spec.objectives for f in grid for s in spec.seeds]
    cells = _run_cells(sweep_cell, args, jobs)
    report = StudyReport(
        "complementarity", cells, notes=notes, config=spec.model_dump(mode="json"), x_label="complementary fraction"
    )
    report.verdicts.update(sweep_verdicts(report))
    return report


def sweep_verdicts(report: StudyReport) -> dict[str, bool]:
    out = {"constant_training_budget": len({c.train_count for c in report.cells}) == 1}
    xs = report.xs()
    for obj in report.objectives():
        v = report.values(obj)
        mean = np.nanmean(v, axis=1)
        if len(xs) >= 2:
            rho = spearmanr(xs, mean).statistic
            out[f"{obj}_spearman_at_least_0.8"] = bool(np.isfinite(rho) and rho >= 0.8)
            seeds = v.shape[1]
            out[f"{obj}_last_beats_first_per_seed"] = int(np.sum(v[-1] >= v[0])) >= int(np.ceil(0.8 * seeds))
    return out


def spearman(report: StudyReport, objective: str) -> float:
    return float(spearmanr(report.xs(), np.nanmean(report.values(objective), axis=1)).statistic)


# ---------------------------------------------------------------- asymmetry discovery


def standalone_accuracy(dataset: Dataset, domain: str, seed: int = 0, epochs: int = 40) -> float:
    """Held-out accuracy of ERM trained on one domain alone (concept block + own block)."""
    mask = dataset.domain_mask(domain)
    x, y = dataset.domain_view(domain), dataset.labels[mask]
    held = dataset.eval_mask()[mask]
    if held.all() or not held.any():
        raise ValueError(f"domain {domain!r} needs samples on both sides of the held-out split")
    model = fit_classifier(x[~held], y[~held], dataset.num_classes, hidden=16, epochs=epochs, seed=seed)
    return float(np.mean(model.predict_labels(x[held]) == y[held]))


def discover_asymmetry(dataset: Dataset, seed: int = 0, epochs: int = 40) -> list[tuple[str, float]]:
    """Domains ranked by standalone held-out accuracy; ties go to the smaller name.

    The first entry is the recommended NCI target.
    """
    if len(dataset.domains) < 2:
        raise ValueError("asymmetry discovery needs at least two domains")
    scores = [(d, standalone_accuracy(dataset, d, seed, epochs)) for d in dataset.domains]
    return sorted(scores, key=lambda t: (-round(t[1], 12), t[0]))


# ---------------------------------------------------------------- risk ordering


class RiskStudySpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    target: DomainSpec = DomainSpec(name="target", label_leak=2.0, block_dim=8, block_noise=BENCH_BLOCK_NOISE)
    source: DomainSpec = DomainSpec(name="source", concept_noise=1.5, block_dim=8, block_noise=BENCH_BLOCK_NOISE)
    k: int = Field(5, ge=3)
    concept_dim: int = 8
    num_classes: int = 8
    num_supports: int = 1500
    seeds: list[int] = Field(default_factory=lambda: list(range(10)))
    train: TrainConfig = Field(
        default_factory=lambda: TrainConfig(epochs=30, hidden=[16], disc_hidden=[16], adv_weight=1.0)
    )


def symmetric_spec(spec: RiskStudySpec) -> RiskStudySpec:
    """Same study with every domain knob (leak, concept noise, block noise) at zero.

    With block noise left on, domains still differ in which coordinates carry
    noise, and pooled ERM at equal budget sees the target's noise block in only
    1/k of its rows; that is a real gap unrelated to asymmetry.
    """
    sym = dict(label_leak=0.0, concept_noise=0.0, block_noise=0.0)
    return spec.model_copy(update={"target": spec.target.model_copy(update=sym), "source": spec.source.model_copy(update=sym)})


def risk_dataset(spec: RiskStudySpec, seed: int) -> Dataset:
    domains = interpolate_domains(spec.target, spec.source, spec.k)
    config = DatasetConfig(
        seed=seed,
        concept_dim=spec.concept_dim,
        num_classes=spec.num_classes,
        num_supports=spec.num_supports,
        domains=domains,
    )
    return _generate(config)


def pooled_budget_mask(dataset: Dataset, target: str) -> np.ndarray:
    """Train rows for pooled ERM at the target-only budget.

    Each training support is kept in exactly one domain, chosen round-robin, so
    the pooled set has as many rows as the target's train split.
    """
    train = ~dataset.eval_mask()
    keep = np.zeros(len(dataset), dtype=bool)
    k = len(dataset.domains)
    tids = np.sort(dataset.support_ids[train & dataset.domain_mask(target)])
    slot = {int(s): i % k for i, s in enumerate(tids)}
    for row in np.flatnonzero(train):
        keep[row] = slot.get(int(dataset.support_ids[row]), -1) == dataset.domain_idx[row]
    return keep


def risk_cells(spec: RiskStudySpec, seed: int, study: str = "risk_ordering") -> list[Cell]:
    ds = risk_dataset(spec, seed)
    tgt = spec.target.name
    held = ds.eval_mask() & ds.domain_mask(tgt)
    test = ds.subset(held)
    base = spec.train.model_copy(update={"seed": seed})
    cells = []

    def record(name, model, n):
        acc, risk = evaluate(model, test, tgt, split="all")
        cells.append(Cell(study, name, 0.0, seed, acc, risk, train_count=n))

    pooled = ds.subset(pooled_budget_mask(ds, tgt))
    record("pooled_erm", train(pooled, base.model_copy(update={"objective": "erm"}), split="all"), len(pooled))
    only = base.model_copy(update={"objective": "erm", "domains": [tgt]})
    n_target = int((~ds.eval_mask() & ds.domain_mask(tgt)).sum())
    record("target_only_erm", train(ds, only), n_target)
    nci = base.model_copy(update={"objective": "nci", "target_domain": tgt})
    record("nci", train(ds, nci), len(ds.split("train")))
    # concept block only: what the shared semantics alone support
    tr = ~ds.eval_mask() & ds.domain_mask(tgt)
    probe = fit_classifier(ds.features[tr, : ds.concept_dim], ds.labels[tr], ds.num_classes, seed=seed)
    acc = float(np.mean(probe.predict_labels(test.features[:, : ds.concept_dim]) == test.labels))
    cells.append(Cell(study, "concept_probe", 0.0, seed, acc, float("nan"), train_count=n_target))
    return cells


def _risk_cells_star(spec, seed, study):
    return risk_cells(spec, seed, study)


def risk_ordering_study(spec: RiskStudySpec | None = None, jobs: int = 1, symmetric_control: bool = True) -> StudyReport:
    spec = spec or RiskStudySpec()
    args = [(spec, s, "risk_ordering") for s in spec.seeds]
    if symmetric_control:
        args += [(symmetric_spec(spec), s, "symmetric_control") for s in spec.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            nested = list(pool.map(_risk_cells_star, *zip(*args)))
    else:
        nested = [risk_cells(*a) for a in args]
    cells = sorted((c for group in nested for c in group), key=Cell.key)
    report = StudyReport("risk_ordering", cells, config=spec.model_dump(mode="json"), x_label="study")
    report.verdicts.update(risk_verdicts(cells))
    return report


def risk_verdicts(cells: list[Cell]) -> dict[str, bool]:
    """Orderings use target 0-1 error; seed thresholds are 9 in 10."""

    def err(study):
        by = {(c.objective, c.seed): 1.0 - c.accuracy for c in cells if c.study == study}
        seeds = sorted({s for _, s in by})
        return by, seeds

    out = {}
    by, seeds = err("risk_ordering")
    if seeds:
        need = int(np.ceil(0.9 * len(seeds)))
        out["target_only_le_pooled"] = sum(by["target_only_erm", s] <= by["pooled_erm", s] for s in seeds) >= need
        out["nci_le_pooled"] = sum(by["nci", s] <= by["pooled_erm", s] for s in seeds) >= need
    by, seeds = err("symmetric_control")
    if seeds:
        gap = np.mean([by["pooled_erm", s] - by["target_only_erm", s] for s in seeds])
        out["symmetric_gap_within_2_points"] = bool(abs(gap) <= 0.02)
    return out


def symmetric_gap(report: StudyReport) -> float:
    by = {(c.objective, c.seed): 1.0 - c.accuracy for c in report.cells if c.study == "symmetric_control"}
    seeds = sorted({s for _, s in by})
    return float(np.mean([by["pooled_erm", s] - by["target_only_erm", s] for s in seeds]))


# ---------------------------------------------------------------- rendering

CELL_COLUMNS = ("study", "objective", "x", "seed", "accuracy", "risk", "d_hat", "train_count")


def _f(v: float) -> str:
    if isinstance(v, float) and not np.isfinite(v):
        return "nan"
    s = f"{v:.9g}"
    return "0" if s == "-0" else s


def cells_csv(report: StudyReport) -> str:
    lines = [",".join(CELL_COLUMNS)]
    for c in report.cells:
        lines.append(
            ",".join([c.study, c.objective, _f(c.x), str(c.seed), _f(c.accuracy), _f(c.risk), _f(c.d_hat), str(c.train_count)])
        )
    return "\n".join(lines) + "\n"


def summary_text(report: StudyReport) -> str:
    lines = [f"study: {report.name}", f"cells: {len(report.cells)}"]
    for obj, (mean, std) in report.aggregate().items():
        pts = " ".join(f"{_f(x)}:{mean[i]:.4f}+-{std[i]:.4f}" for i, x in enumerate(report.xs()))
        lines.append(f"accuracy[{obj}]: {pts}")
    lines.append("verdicts (seed-count thresholds, no hypothesis tests):")
    for k in sorted(report.verdicts):
        lines.append(f"  {k}: {'pass' if report.verdicts[k] else 'fail'}")
    for n in report.notes:
        lines.append(f"note: {n}")
    return "\n".join(lines) + "\n"


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def curve_svg(report: StudyReport, width: int = 480, height: int = 320) -> str:
    """Mean accuracy vs x per objective, with a mean +- std band."""
    pad = 40
    xs = report.xs()
    agg = report.aggregate()
    lo = min(float(np.nanmin(m - s)) for m, s in agg.values())
    hi = max(float(np.nanmax(m + s)) for m, s in agg.values())
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    x0, x1 = xs[0], xs[-1] if xs[-1] > xs[0] else xs[0] + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - lo) / (hi - lo) * (height - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">{report.x_label}</text>',
        f'<text x="12" y="{pad - 12}" font-size="12">accuracy [{lo:.3f}, {hi:.3f}]</text>',
    ]
    for i, (obj, (mean, std)) in enumerate(agg.items()):
        color = PALETTE[i % len(PALETTE)]
        upper = [f"{px(x):.2f},{py(m + s):.2f}" for x, m, s in zip(xs, mean, std)]
        lower = [f"{px(x):.2f},{py(m - s):.2f}" for x, m, s in zip(xs, mean, std)][::-1]
        out.append(f'<polygon class="band" points="{" ".join(upper + lower)}" fill="{color}" fill-opacity="0.2"/>')
        d = " ".join(("M" if j == 0 else "L") + f"{px(x):.2f},{py(m):.2f}" for j, (x, m) in enumerate(zip(xs, mean)))
        out.append(f'<path d="{d}" stroke="{color}" fill="none" stroke-width="2" data-objective="{obj}"/>')
        out.append(f'<text x="{width - pad}" y="{pad + 14 * i}" text-anchor="end" font-size="11" fill="{color}">{obj}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_report(report: StudyReport, out_dir) -> list[Path]:
    if not report.cells:
        raise ValueError("cannot render an empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "cells.csv": cells_csv(report),
        "summary.txt": summary_text(report),
        "curve.svg": curve_svg(report),
        "config_echo": json.dumps(report.config, indent=2, sort_keys=True) + "\n",
    }
    paths = []
    for name, text in files.items():
        p = out / name
        p.write_text(text)
        paths.append(p)
    return paths
