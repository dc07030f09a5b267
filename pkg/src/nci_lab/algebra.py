"""Set-symbolic model of domains under invariance operators.

A domain is ``[C | D_i]``: a concept basis shared by every domain and an own
basis no other domain uses. Operators act on whole domains:

* commutative: ``a (x) b = [C | {}]`` in either order;
* right-invariant: ``a (x) b = a``, the right operand's own basis is dropped.

Everything is exact set arithmetic, so every law is checked by equality.
"""
from __future__ import annotations

import enum
import itertools
import random
from dataclasses import dataclass, field


class OperatorKind(str, enum.Enum):
    COMMUTATIVE = "commutative"
    RIGHT_INVARIANT = "right_invariant"


@dataclass(frozen=True)
class SymbolicDomain:
    concept_basis: frozenset[str]
    own_basis: frozenset[str] = frozenset()

    def __post_init__(self):
        clash = self.concept_basis & self.own_basis
        if clash:
            raise ValueError(f"own basis overlaps the concept basis on {sorted(clash)}")

    def __str__(self) -> str:
        c = ",".join(sorted(self.concept_basis))
        d = ",".join(sorted(self.own_basis)) or "0"
        return f"[{c} | {d}]"

    @property
    def is_concept_only(self) -> bool:
        return not self.own_basis


CONCEPT = frozenset({"C"})


def concept_domain(concept=CONCEPT) -> SymbolicDomain:
    return SymbolicDomain(frozenset(concept))


def make_domains(n: int, concept=CONCEPT, prefix: str = "D") -> list[SymbolicDomain]:
    return [SymbolicDomain(frozenset(concept), frozenset({f"{prefix}{i}"})) for i in range(1, n + 1)]


def check_disjoint(domains) -> None:
    seen: dict[str, SymbolicDomain] = {}
    for d in domains:
        for s in d.own_basis:
            if s in seen and seen[s] != d:
                raise ValueError(f"own basis symbol {s!r} shared by {seen[s]} and {d}")
            seen[s] = d


def apply(op: OperatorKind | str, a: SymbolicDomain, b: SymbolicDomain) -> SymbolicDomain:
    op = OperatorKind(op)
    if op is OperatorKind.COMMUTATIVE:
        return SymbolicDomain(a.concept_basis & b.concept_basis)
    return a


# ---------------------------------------------------------------- semigroup laws


@dataclass
class LawResult:
    holds: bool = True
    checked: int = 0
    counterexample: tuple | None = None

    def record(self, ok: bool, witness: tuple):
        self.checked += 1
        if not ok and self.holds:
            self.holds = False
            self.counterexample = witness


@dataclass
class SemigroupReport:
    op: OperatorKind
    closure: LawResult = field(default_factory=LawResult)
    commutativity: LawResult = field(default_factory=LawResult)
    associativity: LawResult = field(default_factory=LawResult)

    @property
    def is_commutative_semigroup(self) -> bool:
        return self.closure.holds and self.commutativity.holds and self.associativity.holds

    def to_text(self) -> str:
        lines = [f"operator: {self.op.value}"]
        for name in ("closure", "commutativity", "associativity"):
            law: LawResult = getattr(self, name)
            lines.append(f"{name}: {'pass' if law.holds else 'fail'} ({law.checked} cases)")
            if law.counterexample:
                lines.append(f"{name}_counterexample: " + " ; ".join(str(d) for d in law.counterexample))
        return "\n".join(lines) + "\n"


def check_semigroup(op, domains, trials: int | None = None, seed: int = 0) -> SemigroupReport:
    """Closure, commutativity and associativity of ``op`` on ``domains``.

    ``trials=None`` checks every pair and triple; otherwise that many random
    pairs and triples are drawn. Closure is judged against the set plus the
    concept-only domain.
    """
    op = OperatorKind(op)
    doms = list(dict.fromkeys(domains))
    check_disjoint(doms)
    concepts = {d.concept_basis for d in doms}
    universe = set(doms) | {SymbolicDomain(c) for c in concepts}
    report = SemigroupReport(op)
    if trials is None:
        pairs = itertools.product(doms, repeat=2)
        triples = itertools.product(doms, repeat=3)
    else:
        rng = random.Random(seed)
        pairs = ((rng.choice(doms), rng.choice(doms)) for _ in range(trials))
        triples = ((rng.choice(doms), rng.choice(doms), rng.choice(doms)) for _ in range(trials))
    for a, b in pairs:
        ab = apply(op, a, b)
        report.closure.record(ab in universe, (a, b, ab))
        report.commutativity.record(ab == apply(op, b, a), (a, b))
    for a, b, c in triples:
        left = apply(op, apply(op, a, b), c)
        right = apply(op, a, apply(op, b, c))
        report.associativity.record(left == right, (a, b, c))
    return report


# ---------------------------------------------------------------- distributivity


ZERO = "0"


@dataclass(frozen=True)
class SymbolicEncoder:
    """Maps each basis symbol, and the zero term ``"0"``, to an output symbol.

    Output symbols are idempotent under the symbolic product, so a product is
    the set of its distinct factors.
    """

    images: dict

    def image(self, symbols) -> frozenset[str]:
        missing = [s for s in symbols if s not in self.images]
        if missing:
            raise KeyError(f"encoder undefined on {sorted(missing)}")
        return frozenset(self.images[s] for s in symbols)

    @classmethod
    def invariant(cls, domains, y_hat: str = "y", k: str = "k") -> "SymbolicEncoder":
        images = {ZERO: k}
        for d in domains:
            images.update({s: y_hat for s in d.concept_basis})
            images.update({s: k for s in d.own_basis})
        return cls(images)


def _product_blocks(a: SymbolicDomain, b: SymbolicDomain) -> tuple[frozenset, frozenset]:
    # disjoint bases multiply to the zero term
    concept = a.concept_basis & b.concept_basis or frozenset({ZERO})
    own = a.own_basis & b.own_basis or frozenset({ZERO})
    return concept, own


def distributivity_sides(encoder: SymbolicEncoder, a: SymbolicDomain, b: SymbolicDomain):
    """(encoder(a . b^T), encoder(a) . encoder(b)^T) as blockwise symbol sets."""
    concept, own = _product_blocks(a, b)
    lhs = (encoder.image(concept), encoder.image(own))
    rhs = (
        encoder.image(a.concept_basis) | encoder.image(b.concept_basis),
        encoder.image(a.own_basis or {ZERO}) | encoder.image(b.own_basis or {ZERO}),
    )
    return lhs, rhs


def check_distributivity(encoder: SymbolicEncoder, a: SymbolicDomain, b: SymbolicDomain) -> bool:
    lhs, rhs = distributivity_sides(encoder, a, b)
    return lhs == rhs


# ---------------------------------------------------------------- sample fusion


@dataclass(frozen=True)
class SymbolicSample:
    concept_part: str  # e.g. "c^3"
    domain: str  # domain tag of the domain part
    domain_part: str  # e.g. "d_t^2"

    def __str__(self) -> str:
        return f"{self.concept_part}+{self.domain_part}"


def sample_fusion(sources: list[SymbolicSample], targets: list[SymbolicSample]) -> list[SymbolicSample]:
    """Re-pair each source concept with an observed target domain part.

    Source ``i`` takes the domain part of target ``i mod m_t``. The result is
    the fused sources followed by the unchanged targets.
    """
    if not targets:
        raise ValueError("fusion needs at least one target sample to take domain parts from")
    fused = [
        SymbolicSample(s.concept_part, targets[i % len(targets)].domain, targets[i % len(targets)].domain_part)
        for i, s in enumerate(sources)
    ]
    return fused + list(targets)


def symbolic_samples(domain: str, count: int, start: int = 1) -> list[SymbolicSample]:
    return [SymbolicSample(f"c_{domain}^{i}", domain, f"d_{domain}^{i}") for i in range(start, start + count)]
