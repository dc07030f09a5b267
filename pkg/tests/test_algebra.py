import itertools
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nci_lab.algebra import (
    OperatorKind,
    SymbolicDomain,
    SymbolicEncoder,
    apply,
    check_disjoint,
    check_distributivity,
    check_semigroup,
    concept_domain,
    distributivity_sides,
    make_domains,
    sample_fusion,
    symbolic_samples,
)

COMM, RIGHT = OperatorKind.COMMUTATIVE, OperatorKind.RIGHT_INVARIANT
DS, DT = make_domains(2, prefix="D")
C = concept_domain()


def test_commutative_drops_both_domain_parts():
    assert apply(COMM, DS, DT) == apply(COMM, DT, DS) == C
    assert str(C) == "[C | 0]"


def test_right_invariant_keeps_left_operand():
    assert apply(RIGHT, DS, DT) == DS
    assert apply(RIGHT, DS, DS) == DS


def test_overlap_and_shared_symbols_rejected():
    with pytest.raises(ValueError):
        SymbolicDomain(frozenset({"C"}), frozenset({"C"}))
    with pytest.raises(ValueError):
        check_disjoint([DS, SymbolicDomain(frozenset({"C"}), frozenset({"D1", "X"}))])


def test_right_invariant_not_commutative_with_witness():
    rep = check_semigroup(RIGHT, [C, DS, DT])
    assert not rep.commutativity.holds and rep.associativity.holds and rep.closure.holds
    a, b = rep.commutativity.counterexample
    assert apply(RIGHT, a, b) != apply(RIGHT, b, a)
    assert "commutativity: fail" in rep.to_text()


def test_semigroup_exhaustive_for_small_sets():
    pool = [C] + make_domains(5)
    for size in range(1, 5):
        for subset in itertools.combinations(pool, size):
            rep = check_semigroup(COMM, subset)
            assert rep.is_commutative_semigroup
            assert rep.associativity.checked == size**3


def test_semigroup_random_trials():
    rep = check_semigroup(COMM, [C] + make_domains(8), trials=1000, seed=4)
    assert rep.is_commutative_semigroup and rep.associativity.checked == 1000


def test_right_invariant_associative_on_five():
    assert check_semigroup(RIGHT, make_domains(5)).associativity.holds


@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8))
def test_commutative_result_never_has_own_symbols(i, j, n):
    doms = make_domains(max(i, j, n))
    assert apply(COMM, doms[i - 1], doms[j - 1]).is_concept_only


@given(st.integers(1, 6), st.integers(1, 6))
def test_right_invariant_never_changes_left(i, j):
    doms = make_domains(6)
    assert apply("right_invariant", doms[i - 1], doms[j - 1]) == doms[i - 1]


# ---------------------------------------------------------------- distributivity


def test_distributivity_with_invariant_encoder():
    enc = SymbolicEncoder.invariant([DS, DT])
    assert check_distributivity(enc, DS, DS)
    assert check_distributivity(enc, DS, DT)
    lhs, _ = distributivity_sides(enc, DS, DS)
    assert lhs == (frozenset({"y"}), frozenset({"k"}))


@given(st.integers(1, 6), st.integers(1, 6))
def test_distributivity_any_pair(i, j):
    doms = make_domains(6)
    assert check_distributivity(SymbolicEncoder.invariant(doms), doms[i - 1], doms[j - 1])


def test_non_invariant_encoder_breaks_distributivity():
    enc = SymbolicEncoder({"C": "y", "D1": "k1", "D2": "k2", "0": "k"})
    lhs, rhs = distributivity_sides(enc, DS, DT)
    assert not check_distributivity(enc, DS, DT) and lhs != rhs


def test_encoder_must_cover_basis():
    with pytest.raises(KeyError):
        check_distributivity(SymbolicEncoder({"C": "y"}), DS, DT)


# ---------------------------------------------------------------- fusion


def test_fusion_three_plus_two():
    src, tgt = symbolic_samples("s", 3), symbolic_samples("t", 2)
    out = sample_fusion(src, tgt)
    assert len(out) == 5 and {s.domain for s in out} == {"t"}
    assert [s.domain_part for s in out[:3]] == ["d_t^1", "d_t^2", "d_t^1"]


def test_fusion_without_sources_returns_targets():
    tgt = symbolic_samples("t", 4)
    assert sample_fusion([], tgt) == tgt


def test_fusion_needs_targets():
    with pytest.raises(ValueError):
        sample_fusion(symbolic_samples("s", 2), [])


@given(st.integers(0, 30), st.integers(1, 30))
def test_fusion_counts_and_concepts(ms, mt):
    src, tgt = symbolic_samples("s", ms), symbolic_samples("t", mt)
    out = sample_fusion(src, tgt)
    assert len(out) == ms + mt
    assert {s.domain_part for s in out} <= {t.domain_part for t in tgt}
    assert Counter(s.concept_part for s in out) == Counter(s.concept_part for s in src + tgt)
