"""Command-line entry point: ``nci-lab <subcommand> [--config FILE] [--out DIR] ...``.

Config files are YAML or JSON, validated strictly (unknown keys are errors).
Every subcommand writes its resolved configuration to ``<out>/config_echo``.
Exit codes: 0 success, 1 invalid config / failed run / failed criterion,
2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import acceptance, algebra
from .data import Dataset, read_csv, write_csv
from .divergence import (
    BoundInputs,
    DiscConfig,
    evaluate_fixed_discriminator,
    haussler_epsilon,
    haussler_sample_complexity,
    target_risk_bound,
    trained_h_divergence,
)
from .experiments import SweepSpec, complementarity_sweep, default_sweep_spec, discover_asymmetry, render_report
from .synth import DatasetConfig, generate
from .training import TrainConfig, curve_to_csv, evaluate, load_checkpoint, save_checkpoint, train

log = logging.getLogger("nci_lab")


class CliError(Exception):
    """A failure reported on stderr with exit code 1."""


# ---------------------------------------------------------------- config schemas


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataSource(_Strict):
    """Exactly one of ``data`` (a CSV written by ``gen``) or ``dataset`` (generate inline)."""

    data: str | None = None
    dataset: DatasetConfig | None = None

    @model_validator(mode="after")
    def _one(self):
        if (self.data is None) == (self.dataset is None):
            raise ValueError("give exactly one of 'data' (CSV path) or 'dataset' (inline config)")
        return self

    def load(self) -> Dataset:
        if self.dataset is not None:
            return generate(self.dataset)
        try:
            return read_csv(self.data)
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"cannot read dataset {self.data}: {exc}") from None


class TrainFile(DataSource):
    train: TrainConfig = Field(default_factory=TrainConfig)


class EvalFile(DataSource):
    checkpoint: str
    domains: list[str] | None = None
    split: Literal["train", "eval", "all"] = "eval"


class HdivFile(DataSource):
    checkpoint: str
    target: str | None = None
    mode: Literal["min", "fixed"] = "min"
    disc: DiscConfig = Field(default_factory=DiscConfig)


class BoundsFile(_Strict):
    bound: BoundInputs | None = None
    hypotheses: int | None = Field(None, ge=1)
    delta: float | None = Field(None, gt=0, le=1)
    epsilon: float | None = Field(None, gt=0, lt=1)
    samples: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def _something(self):
        if self.bound is None and self.hypotheses is None:
            raise ValueError("give 'bound' inputs, 'hypotheses' with 'delta' and 'epsilon' or 'samples', or both")
        if self.hypotheses is not None and (self.delta is None or (self.epsilon is None and self.samples is None)):
            raise ValueError("'hypotheses' needs 'delta' and at least one of 'epsilon' or 'samples'")
        return self


class DiscoverFile(DataSource):
    seed: int = 0
    epochs: int = Field(40, gt=0)


class AlgebraFile(_Strict):
    num_domains: int = Field(5, ge=2, le=26)
    trials: int = Field(1000, ge=1)
    seed: int = 0


class SelftestFile(_Strict):
    criteria: list[int] | None = None


SCHEMAS = {
    "gen": DatasetConfig,
    "train": TrainFile,
    "eval": EvalFile,
    "hdiv": HdivFile,
    "bounds": BoundsFile,
    "sweep": SweepSpec,
    "discover": DiscoverFile,
    "algebra-check": AlgebraFile,
    "selftest": SelftestFile,
}


def _default_raw(command: str) -> dict | None:
    if command == "sweep":
        return default_sweep_spec().model_dump(mode="json")
    if command in ("algebra-check", "selftest"):
        return {}
    return None


def _load_raw(path: str | None, command: str) -> dict:
    if path is None:
        raw = _default_raw(command)
        if raw is None:
            raise CliError(f"{command} needs --config")
        return raw
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise CliError(f"config {path} does not parse: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise CliError(f"config {path}: top level must be a mapping")
    return raw


def override_seeds(raw, seed: int):
    """Replace every ``seed`` key (and every ``seeds`` list) anywhere in the config."""
    if isinstance(raw, dict):
        out = {}
        for k, v in raw.items():
            if k == "seed":
                out[k] = seed
            elif k == "seeds" and isinstance(v, list):
                out[k] = [seed]
            else:
                out[k] = override_seeds(v, seed)
        return out
    if isinstance(raw, list):
        return [override_seeds(v, seed) for v in raw]
    return raw


def _apply_flags(command: str, raw: dict, args) -> dict:
    if args.seed is not None:
        raw = override_seeds(raw, args.seed)
        if command == "train":
            raw.setdefault("train", {})["seed"] = args.seed
    if command == "train":
        if args.objective:
            raw.setdefault("train", {})["objective"] = args.objective
        if args.target:
            raw.setdefault("train", {})["target_domain"] = args.target
    if command == "sweep" and args.target:
        raw["target"] = args.target
    if command == "hdiv" and args.mode:
        raw["mode"] = args.mode
    if command == "selftest" and args.criteria:
        raw["criteria"] = acceptance.parse_criteria(args.criteria)
    return raw


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"config error at {path}: {err['msg']}")
    return "\n".join(lines)


def resolve_config(command: str, args):
    raw = _apply_flags(command, _load_raw(args.config, command), args)
    try:
        return SCHEMAS[command].model_validate(raw)
    except ValidationError as exc:
        raise CliError(format_validation_error(exc)) from None


def _echo(out: Path, config: BaseModel) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_echo").write_text(json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- subcommands


def cmd_gen(cfg: DatasetConfig, out: Path, args) -> int:
    ds = generate(cfg)
    write_csv(ds, out / "dataset.csv")
    print(f"wrote {len(ds)} samples over {len(ds.domains)} domains to {out / 'dataset.csv'}")
    return 0


def cmd_train(cfg: TrainFile, out: Path, args) -> int:
    ds = cfg.load()
    model = train(ds, cfg.train)
    save_checkpoint(model, out / "model.ckpt")
    (out / "curve.csv").write_text(curve_to_csv(model.curve))
    last = model.curve[-1]
    print(f"trained {cfg.train.objective} for {cfg.train.epochs} epochs; final train_acc {last['train_acc']:.4f}")
    return 0


def _load_model(path: str):
    try:
        return load_checkpoint(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load checkpoint {path}: {exc}") from None


def cmd_eval(cfg: EvalFile, out: Path, args) -> int:
    ds = cfg.load()
    model = _load_model(cfg.checkpoint)
    lines = ["domain,split,accuracy,risk"]
    for d in cfg.domains or ds.domains:
        try:
            acc, risk = evaluate(model, ds, d, cfg.split)
        except (KeyError, ValueError) as exc:
            raise CliError(str(exc)) from None
        lines.append(f"{d},{cfg.split},{acc:.9g},{risk:.9g}")
    text = "\n".join(lines) + "\n"
    (out / "metrics.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def _fixed_report(model, ds: Dataset, target: str):
    part = ds.split("eval")
    reps = model.represent(part.features)
    if model.config.objective == "conditional":
        reps = np.hstack([reps, np.eye(ds.num_classes)[part.labels]])
    tmask = part.domain_mask(target)

    def eta(x):
        return (model.discriminator.predict(x)[:, 0] > 0.5).astype(np.int64)

    return evaluate_fixed_discriminator(reps[~tmask], reps[tmask], eta)


def cmd_hdiv(cfg: HdivFile, out: Path, args) -> int:
    ds = cfg.load()
    model = _load_model(cfg.checkpoint)
    target = cfg.target or model.config.target_domain
    if target is None:
        raise CliError("hdiv needs a target domain (config 'target' or a checkpoint trained with one)")
    if target not in ds.domains:
        raise CliError(f"target {target!r} not in dataset domains {ds.domains}")
    if cfg.mode == "min":
        report = trained_h_divergence(model, ds, target, cfg.disc)
    else:
        report = _fixed_report(model, ds, target)
    (out / "divergence.txt").write_text(report.to_text())
    pair = "+".join(d for d in ds.domains if d != target) + "->" + target
    (out / "divergence.csv").write_text(report.CSV_HEADER + "\n" + report.csv_row(model.config.objective, pair) + "\n")
    sys.stdout.write(report.to_text())
    if report.warning():
        print(f"warning: {report.warning()}", file=sys.stderr)
    return 0


def cmd_bounds(cfg: BoundsFile, out: Path, args) -> int:
    lines = []
    if cfg.bound is not None:
        lines.append(f"target_risk_bound: {target_risk_bound(cfg.bound)!r}")
    if cfg.hypotheses is not None:
        if cfg.epsilon is not None:
            lines.append(f"M={haussler_sample_complexity(cfg.hypotheses, cfg.delta, cfg.epsilon)}")
        if cfg.samples is not None:
            lines.append(f"epsilon_at_M: {haussler_epsilon(cfg.hypotheses, cfg.delta, cfg.samples)!r}")
    text = "\n".join(lines) + "\n"
    (out / "bounds.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_sweep(cfg: SweepSpec, out: Path, args) -> int:
    names = [d.name for d in cfg.base.domains]
    for role, name in (("target", cfg.target), ("complementary_source", cfg.complementary_source)):
        if name not in names:
            raise CliError(f"{role} {name!r} is not a domain of base config {names}")
    report = complementarity_sweep(cfg, jobs=args.jobs)
    render_report(report, out)
    # render_report writes the study's own config_echo; keep the CLI's resolved one
    _echo(out, cfg)
    sys.stdout.write((out / "summary.txt").read_text())
    return 0 if all(report.verdicts.values()) else 1


def cmd_discover(cfg: DiscoverFile, out: Path, args) -> int:
    ds = cfg.load()
    ranking = discover_asymmetry(ds, seed=cfg.seed, epochs=cfg.epochs)
    lines = ["rank,domain,standalone_accuracy"] + [f"{i + 1},{d},{a:.9g}" for i, (d, a) in enumerate(ranking)]
    (out / "ranking.csv").write_text("\n".join(lines) + "\n")
    print(f"recommended NCI target: {ranking[0][0]}")
    for d, a in ranking:
        print(f"  {d}: {a:.4f}")
    return 0


def cmd_algebra(cfg: AlgebraFile, out: Path, args) -> int:
    doms = algebra.make_domains(cfg.num_domains) + [algebra.concept_domain()]
    sections = []
    ok = True
    for op in algebra.OperatorKind:
        exhaustive = algebra.check_semigroup(op, doms)
        sampled = algebra.check_semigroup(op, doms, trials=cfg.trials, seed=cfg.seed)
        sections.append(f"# semigroup, exhaustive\n{exhaustive.to_text()}")
        sections.append(f"# semigroup, {cfg.trials} random pairs and triples\n{sampled.to_text()}")
        if op is algebra.OperatorKind.COMMUTATIVE:
            ok &= exhaustive.is_commutative_semigroup and sampled.is_commutative_semigroup
    a, b = doms[0], doms[1]
    enc = algebra.SymbolicEncoder.invariant(doms)
    bad = algebra.SymbolicEncoder({**enc.images, **{s: f"k_{s}" for d in (a, b) for s in d.own_basis}})
    dist = [
        f"invariant encoder, {a} x {b}: {'pass' if algebra.check_distributivity(enc, a, b) else 'fail'}",
        f"invariant encoder, {a} x {a}: {'pass' if algebra.check_distributivity(enc, a, a) else 'fail'}",
    ]
    lhs, rhs = algebra.distributivity_sides(bad, a, b)
    dist.append(
        f"non-invariant encoder, {a} x {b}: {'pass' if lhs == rhs else 'fail'}"
        f" (lhs {sorted(lhs[1])} vs rhs {sorted(rhs[1])})"
    )
    ok &= algebra.check_distributivity(enc, a, b)
    sections.append("# distributivity\n" + "\n".join(dist) + "\n")
    fused = algebra.sample_fusion(algebra.symbolic_samples("s", 3), algebra.symbolic_samples("t", 2))
    sections.append(
        f"# sample fusion (m_s=3, m_t=2)\ncount: {len(fused)}\n"
        + "".join(f"{x}\n" for x in fused)
        + f"all target domain: {all(x.domain == 't' for x in fused)}\n"
    )
    text = "\n".join(sections)
    (out / "algebra.txt").write_text(text)
    sys.stdout.write(text)
    return 0 if ok else 1


def cmd_selftest(cfg: SelftestFile, out: Path, args) -> int:
    try:
        results = acceptance.selftest(out, cfg.criteria, jobs=args.jobs, log=print)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    failed = [f"{r.number} {r.name}" for r in results if not r.passed]
    if failed:
        print("failed criteria: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "gen": (cmd_gen, "generate a synthetic multi-domain dataset (CSV + metadata)"),
    "train": (cmd_train, "train encoder/head/discriminator; writes checkpoint and curves"),
    "eval": (cmd_eval, "per-domain accuracy and risk of a checkpoint"),
    "hdiv": (cmd_hdiv, "empirical H-divergence of a checkpoint's representations"),
    "bounds": (cmd_bounds, "target-risk bound and Haussler sample complexity"),
    "sweep": (cmd_sweep, "complementarity sweep"),
    "discover": (cmd_discover, "rank domains by standalone accuracy; recommend an NCI target"),
    "algebra-check": (cmd_algebra, "semigroup, distributivity and fusion checks of the symbolic model"),
    "selftest": (cmd_selftest, "run the acceptance suite; exit 0 iff every criterion passes"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nci-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--out", default=f"out/{name}", help="output directory (default: out/<subcommand>)")
        p.add_argument("--seed", type=int, help="replace every seed in the config")
        if name in ("sweep", "selftest"):
            p.add_argument("--jobs", type=int, default=1, help="worker processes for independent cells")
        if name == "hdiv":
            p.add_argument("--mode", choices=["min", "fixed"], help="fresh trained discriminator (min) or the checkpoint's own (fixed)")
        if name == "train":
            p.add_argument("--objective", choices=["erm", "commutative", "conditional", "nci"])
        if name in ("train", "sweep"):
            p.add_argument("--target", help="target domain name")
        if name == "selftest":
            p.add_argument("--criteria", help="comma-separated subset, e.g. 1,2,5")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    for attr, default in (("jobs", 1), ("mode", None), ("objective", None), ("target", None), ("criteria", None)):
        if not hasattr(args, attr):
            setattr(args, attr, default)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be a non-negative integer", file=sys.stderr)
        return 1
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 1
    handler = COMMANDS[args.command][0]
    out = Path(args.out)
    try:
        cfg = resolve_config(args.command, args)
        _echo(out, cfg)
        return handler(cfg, out, args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
