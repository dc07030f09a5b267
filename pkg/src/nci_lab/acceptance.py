"""The acceptance suite: eleven criteria, each a function returning a verdict.

``selftest`` runs criteria 1-10 twice into ``<out>/run1`` and ``<out>/run2``
and then compares the two artifact trees byte for byte (criterion 11). Timings
never enter an artifact file, so the trees can be compared directly.
"""
from __future__ import annotations

import filecmp
import itertools
import random
import time
from dataclasses import dataclass
from pathlib import Path

import mpmath
import numpy as np

from . import algebra
from .divergence import (
    BoundInputs,
    HypothesisFamily,
    evaluate_fixed_discriminator,
    exact_h_divergence,
    haussler_epsilon,
    haussler_sample_complexity,
    target_risk_bound,
)
from .experiments import (
    RiskStudySpec,
    benchmark_config,
    benchmark_study,
    complementarity_sweep,
    default_sweep_spec,
    render_report,
    risk_dataset,
    risk_ordering_study,
    spearman,
    symmetric_gap,
    sweep_supports,
)
from .gradcheck import max_relative_error
from .synth import generate, render, verify_orthogonality


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"criterion {self.number:2d} {self.name}: {'PASS' if self.passed else 'FAIL'} ({self.detail}) [{self.seconds:.1f}s]"


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


# ---------------------------------------------------------------- 1-6: exact and oracle checks


def c1_bracket_values(out: Path, jobs: int = 1) -> tuple[bool, str]:
    source = np.array([[0.0], [0.2], [0.4]])
    target = np.array([[1.0], [1.2], [1.4]])
    swap = evaluate_fixed_discriminator(source, target, lambda x: (x[:, 0] < 0.5).astype(int))
    always_zero = evaluate_fixed_discriminator(source, target, lambda x: np.zeros(len(x), dtype=int))
    # the swapped convention counts source-as-1 and target-as-0: all-ones gives [1 + 0]
    all_one = evaluate_fixed_discriminator(
        source, target, lambda x: np.ones(len(x), dtype=int), source_event=1, target_event=0
    )
    separable = exact_h_divergence(source, target, HypothesisFamily.covering(source, target))
    collapsed = exact_h_divergence(source, source.copy(), HypothesisFamily.covering(source))
    values = {
        "zero_bracket": swap.d_hat,
        "one_plus_zero_bracket": always_zero.d_hat,
        "one_plus_zero_swapped_events": all_one.d_hat,
        "swap_separable": separable.d_hat,
        "collapsed": collapsed.d_hat,
    }
    _write(out, "values.txt", "".join(f"{k}: {v!r}\n" for k, v in values.items()))
    ok = values == {
        "zero_bracket": 2.0,
        "one_plus_zero_bracket": 0.0,
        "one_plus_zero_swapped_events": 0.0,
        "swap_separable": 2.0,
        "collapsed": 0.0,
    } and (all_one.source_term, all_one.target_term) == (1.0, 0.0)
    return ok, ", ".join(f"{k}={v:g}" for k, v in values.items())


def c2_gradients(out: Path, jobs: int = 1) -> tuple[bool, str]:
    errs = [max_relative_error(s) for s in range(20)]
    _write(out, "max_relative_error.txt", "".join(f"{s}: {e:.3e}\n" for s, e in enumerate(errs)))
    return max(errs) < 1e-4, f"max rel err {max(errs):.2e} over 20 MLPs"


def semigroup_reports():
    """Exhaustive checks on every set of size <= 4 from a 5-domain pool plus 1000 random triples on 8 domains."""
    pool = [algebra.concept_domain()] + algebra.make_domains(5)
    reports = []
    for size in range(1, 5):
        for subset in itertools.combinations(pool, size):
            for op in algebra.OperatorKind:
                reports.append((op, size, algebra.check_semigroup(op, subset)))
    big = algebra.make_domains(8) + [algebra.concept_domain()]
    for op in algebra.OperatorKind:
        reports.append((op, 9, algebra.check_semigroup(op, big, trials=1000, seed=0)))
    return reports


def c3_semigroup(out: Path, jobs: int = 1) -> tuple[bool, str]:
    reports = semigroup_reports()
    comm = [r for op, _, r in reports if op is algebra.OperatorKind.COMMUTATIVE]
    right = [r for op, _, r in reports if op is algebra.OperatorKind.RIGHT_INVARIANT]
    comm_ok = all(r.is_commutative_semigroup for r in comm)
    # a witness needs two distinct non-concept domains in the set
    witnessed = [r for r in right if not r.commutativity.holds]
    right_ok = all(r.closure.holds and r.associativity.holds for r in right) and len(witnessed) > 0
    a, b = algebra.make_domains(2)
    direct = algebra.check_semigroup("right_invariant", [a, b, algebra.concept_domain()])
    right_ok = right_ok and not direct.commutativity.holds
    _write(out, "commutative_big.txt", comm[-1].to_text())
    _write(out, "right_invariant_big.txt", right[-1].to_text())
    _write(out, "right_invariant_pair.txt", direct.to_text())
    return comm_ok and right_ok, (
        f"{len(comm)} commutative checks pass={comm_ok}; right-invariant witness "
        f"{' ; '.join(str(d) for d in direct.commutativity.counterexample or ())}"
    )


def c4_orthogonality(out: Path, jobs: int = 1) -> tuple[bool, str]:
    checked, ok = [], True
    for seed in range(10):
        good = verify_orthogonality(generate(benchmark_config(seed)))
        checked.append(f"benchmark seed {seed}: {good}")
        ok &= good
    for seed in range(2):
        good = verify_orthogonality(risk_dataset(RiskStudySpec(), seed))
        checked.append(f"risk grid seed {seed}: {good}")
        ok &= good
    spec = default_sweep_spec()
    for f in (spec.grid[0], spec.grid[-1]):
        assignment, _ = sweep_supports(spec, f)
        good = verify_orthogonality(render(spec.base, assignment))
        checked.append(f"sweep fraction {f}: {good}")
        ok &= good
    _write(out, "datasets.txt", "\n".join(checked) + "\n")
    return ok, f"{len(checked)} datasets, all exact zeros={ok}"


def _haussler_oracle(t, delta, m):
    with mpmath.workdps(50):
        return (mpmath.log(t) + mpmath.log(1 / mpmath.mpf(delta))) / m


def c5_haussler(out: Path, jobs: int = 1) -> tuple[bool, str]:
    rng = random.Random(5)
    worst, m_ok, lines = 0.0, True, []
    for _ in range(100):
        t, delta, eps = rng.randint(1, 10**6), rng.uniform(1e-4, 0.5), rng.uniform(1e-3, 0.5)
        m = haussler_sample_complexity(t, delta, eps)
        with mpmath.workdps(50):
            m_oracle = max(1, int(mpmath.ceil((mpmath.log(t) + mpmath.log(1 / mpmath.mpf(delta))) / mpmath.mpf(eps))))
        m_ok &= m == m_oracle
        got = haussler_epsilon(t, delta, m)
        want = _haussler_oracle(t, delta, m)
        rel = float(abs(mpmath.mpf(got) - want) / abs(want)) if want != 0 else abs(got)
        worst = max(worst, rel)
        lines.append(f"{t},{delta!r},{eps!r},{m},{got!r}")
    example = haussler_sample_complexity(20, 0.05, 0.05)
    _write(out, "triples.csv", "T,delta,epsilon,M,epsilon_at_M\n" + "\n".join(lines) + "\n")
    _write(out, "example.txt", f"M={example}\n")
    return worst <= 1e-12 and m_ok and example == 120, f"max rel err {worst:.1e}, M(20,0.05,0.05)={example}"


def _bound_oracle(b: BoundInputs):
    with mpmath.workdps(50):
        n, d, delta = mpmath.mpf(b.n), mpmath.mpf(b.vc_dim), mpmath.mpf(b.delta)
        first = mpmath.sqrt(4 / n * (d * mpmath.log(2 * mpmath.e * n / d) + mpmath.log(4 / delta)))
        second = 4 * mpmath.sqrt(1 / n * (d * mpmath.log(2 * n / d) + mpmath.log(4 / delta)))
        return mpmath.mpf(b.source_risk) + first + mpmath.mpf(b.d_hat) + second + mpmath.mpf(b.beta)


def c6_bound(out: Path, jobs: int = 1) -> tuple[bool, str]:
    rng = random.Random(6)
    worst, affine, lines = 0.0, True, []
    for _ in range(100):
        d = rng.randint(1, 200)
        b = BoundInputs(
            source_risk=rng.uniform(0, 1), n=rng.randint(d + 1, 10**6), vc_dim=d,
            delta=rng.uniform(1e-4, 0.5), beta=rng.uniform(0, 0.5), d_hat=rng.uniform(0, 2),
        )
        got = target_risk_bound(b)
        want = _bound_oracle(b)
        worst = max(worst, float(abs(mpmath.mpf(got) - want) / want))
        base = target_risk_bound(b.model_copy(update={"d_hat": 0.0}))
        affine &= got == base + b.d_hat
        lines.append(f"{b.source_risk!r},{b.n},{b.vc_dim},{b.delta!r},{b.beta!r},{b.d_hat!r},{got!r}")
    _write(out, "bounds.csv", "source_risk,n,vc_dim,delta,beta,d_hat,bound\n" + "\n".join(lines) + "\n")
    return worst <= 1e-12 and affine, f"max rel err {worst:.1e}, affine exact={affine}"


# ---------------------------------------------------------------- 7-10: studies


_BENCH_CACHE: dict = {}


def _benchmark(jobs):
    if "report" not in _BENCH_CACHE:
        _BENCH_CACHE["report"] = benchmark_study(range(10), jobs=jobs)
    return _BENCH_CACHE["report"]


def c7_benchmark_accuracy(out: Path, jobs: int = 1) -> tuple[bool, str]:
    _BENCH_CACHE.clear()
    report = _benchmark(jobs)
    render_report(report, out)
    by = {(c.objective, c.seed): c.accuracy for c in report.cells}
    gaps = [by["nci", s] - by["commutative", s] for s in range(10)]
    wins = sum(g > 0 for g in gaps)
    ok = report.verdicts["nci_accuracy_gap_at_least_2_points"] and report.verdicts["nci_accuracy_wins_per_seed"]
    return ok, f"mean gap {100 * np.mean(gaps):+.2f} pts, wins {wins}/10"


def c8_divergence_ordering(out: Path, jobs: int = 1) -> tuple[bool, str]:
    report = _benchmark(jobs)
    by = {(c.objective, c.seed): c.d_hat for c in report.cells}
    wins = sum(by["nci", s] < by["commutative", s] for s in range(10))
    lines = [f"{s},{by['commutative', s]!r},{by['nci', s]!r}" for s in range(10)]
    _write(out, "d_hat.csv", "seed,commutative,nci\n" + "\n".join(lines) + "\n")
    _BENCH_CACHE.clear()
    return report.verdicts["nci_lower_divergence_per_seed"], f"nci lower d_hat on {wins}/10 seeds"


def c9_risk_ordering(out: Path, jobs: int = 1) -> tuple[bool, str]:
    report = risk_ordering_study(RiskStudySpec(), jobs=jobs)
    render_report(report, out)
    v = report.verdicts
    ok = v["target_only_le_pooled"] and v["nci_le_pooled"] and v["symmetric_gap_within_2_points"]
    return ok, (
        f"target-only<=pooled {v['target_only_le_pooled']}, nci<=pooled {v['nci_le_pooled']}, "
        f"symmetric gap {100 * symmetric_gap(report):+.2f} pts"
    )


def c10_complementarity(out: Path, jobs: int = 1) -> tuple[bool, str]:
    report = complementarity_sweep(default_sweep_spec(), jobs=jobs)
    render_report(report, out)
    rho = spearman(report, "nci")
    budget = report.verdicts["constant_training_budget"]
    return rho >= 0.8 and budget, f"spearman {rho:.3f}, constant budget {budget}"


CRITERIA = {
    1: ("bracket_values", c1_bracket_values),
    2: ("gradient_correctness", c2_gradients),
    3: ("semigroup_axioms", c3_semigroup),
    4: ("orthogonality", c4_orthogonality),
    5: ("haussler_calculator", c5_haussler),
    6: ("target_risk_bound", c6_bound),
    7: ("nci_beats_commutative", c7_benchmark_accuracy),
    8: ("divergence_ordering", c8_divergence_ordering),
    9: ("risk_ordering", c9_risk_ordering),
    10: ("complementarity_trend", c10_complementarity),
}
DETERMINISM = (11, "determinism")


def run_criterion(number: int, out: Path, jobs: int = 1) -> CriterionResult:
    name, fn = CRITERIA[number]
    start = time.perf_counter()
    try:
        passed, detail = fn(Path(out) / f"c{number:02d}_{name}", jobs)
    except Exception as exc:  # a crash is a failed criterion, not a crashed suite
        passed, detail = False, f"error: {type(exc).__name__}: {exc}"
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - start)


def tree_differences(a: Path, b: Path) -> list[str]:
    """Relative paths that are missing on one side or differ in bytes."""
    files_a = {p.relative_to(a) for p in a.rglob("*") if p.is_file()}
    files_b = {p.relative_to(b) for p in b.rglob("*") if p.is_file()}
    diffs = sorted(str(p) for p in files_a ^ files_b)
    for p in sorted(files_a & files_b):
        if not filecmp.cmp(a / p, b / p, shallow=False):
            diffs.append(str(p))
    return diffs


def selftest(out, criteria=None, jobs: int = 1, log=None) -> list[CriterionResult]:
    """Run the chosen criteria (default: all) into run1, again into run2, then compare."""
    out = Path(out)
    numbers = sorted(criteria or CRITERIA)
    unknown = [n for n in numbers if n not in CRITERIA and n != DETERMINISM[0]]
    if unknown:
        raise ValueError(f"unknown criteria {unknown}; choose from 1-11")
    numbers = [n for n in numbers if n in CRITERIA]
    results = []
    for n in numbers:
        r = run_criterion(n, out / "run1", jobs)
        results.append(r)
        if log:
            log(r.line())
    start = time.perf_counter()
    second = [run_criterion(n, out / "run2", jobs) for n in numbers]
    diffs = tree_differences(out / "run1", out / "run2")
    flips = [r.number for r, s in zip(results, second) if r.passed != s.passed]
    ok = not diffs and not flips
    detail = "artifact trees byte-identical" if ok else f"differing files {diffs[:5]}, verdict flips {flips}"
    final = CriterionResult(DETERMINISM[0], DETERMINISM[1], ok, detail, time.perf_counter() - start)
    results.append(final)
    if log:
        log(final.line())
    _write(out, "summary.txt", "".join(f"criterion {r.number} {r.name}: {'PASS' if r.passed else 'FAIL'}\n" for r in results))
    return results


def parse_criteria(text: str | None) -> list[int] | None:
    if not text:
        return None
    try:
        return sorted({int(v) for v in text.split(",") if v.strip()})
    except ValueError:
        raise ValueError(f"criteria must be comma-separated integers, got {text!r}") from None


__all__ = ["CRITERIA", "CriterionResult", "selftest", "run_criterion", "tree_differences", "parse_criteria"]
