import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nci_lab.divergence import (
    BoundInputs,
    DiscConfig,
    DivergenceError,
    HypothesisFamily,
    Threshold,
    evaluate_fixed_discriminator,
    exact_h_divergence,
    haussler_epsilon,
    haussler_sample_complexity,
    metric_axiom_check,
    target_risk_bound,
    trained_h_divergence,
)
from nci_lab.synth import DatasetConfig, DomainSpec, generate

# R_S=0.1, n=1000, d=10, delta=0.05, beta=0.05, d_hat=0.2 at 50 digits with mpmath
BOUND_EXAMPLE = 1.8271374764193873605


def test_one_dimensional_separation():
    fam = HypothesisFamily.thresholds([-2.0, 0.0, 2.0])
    r = exact_h_divergence([-1.0, -1.0], [1.0, 1.0], fam)
    assert r.d_hat == 2.0 and r.epsilon == 0.0
    assert r.witness == "axis=0 threshold=0.0 polarity=-1"


def test_identical_sets_are_at_zero():
    x = np.random.default_rng(0).normal(size=(30, 2))
    assert exact_h_divergence(x, x, HypothesisFamily.covering(x)).d_hat == 0.0


def test_fixed_chance_discriminator():
    coin = lambda x: (np.arange(len(x)) % 2).astype(np.int64)
    r = evaluate_fixed_discriminator(np.zeros(100), np.ones(100), coin)
    assert r.d_hat == 0.0 and not r.flip_closed and r.warning()


def test_fixed_discriminator_swap_and_constant():
    sign = Threshold(0, 0.0, 1)
    # the raw bracket of a single member is not minimised, so it can leave [0, 2]
    assert evaluate_fixed_discriminator([-1.0, -1.0], [1.0, 1.0], sign).d_hat == -2.0
    assert evaluate_fixed_discriminator([-1.0], [1.0], sign.complement()).d_hat == 2.0
    zero = lambda x: np.zeros(len(x), dtype=np.int64)
    assert evaluate_fixed_discriminator([0.0], [1.0], zero).d_hat == 0.0


def test_empty_inputs_rejected():
    with pytest.raises(DivergenceError):
        exact_h_divergence([], [1.0], HypothesisFamily.thresholds([0.0]))
    with pytest.raises(DivergenceError):
        exact_h_divergence([1.0], [1.0], HypothesisFamily())


point_sets = st.lists(st.integers(-5, 5), min_size=1, max_size=12).map(lambda v: np.array(v, dtype=float))


@settings(max_examples=80, deadline=None)
@given(point_sets, point_sets)
def test_complement_closed_family_stays_in_range(s, t):
    d = exact_h_divergence(s, t, HypothesisFamily.covering(s, t)).d_hat
    assert 0.0 <= d <= 2.0


@settings(max_examples=60, deadline=None)
@given(point_sets, point_sets)
def test_richer_family_never_lowers_divergence(s, t):
    small = HypothesisFamily.thresholds([0.0])
    big = HypothesisFamily(members=small.members + HypothesisFamily.covering(s, t).members)
    assert exact_h_divergence(s, t, big).d_hat >= exact_h_divergence(s, t, small).d_hat


@settings(max_examples=40, deadline=None)
@given(point_sets, point_sets)
def test_divergence_symmetric(s, t):
    fam = HypothesisFamily.covering(s, t)
    assert exact_h_divergence(s, t, fam).d_hat == exact_h_divergence(t, s, fam).d_hat


def test_metric_axioms_on_disjoint_clusters():
    sets = [np.array([0.0, 0.5]), np.array([3.0, 3.5]), np.array([6.0]), np.array([0.5, 3.0])]
    rep = metric_axiom_check(sets, HypothesisFamily.covering(*sets))
    assert rep.symmetric and rep.positive and rep.triangle and rep.triples_checked == 24
    assert "triangle: pass" in rep.to_text()


def test_metric_check_needs_closed_family():
    with pytest.raises(DivergenceError):
        metric_axiom_check([[0.0], [1.0]], HypothesisFamily.thresholds([0.5], both_polarities=False))


# ---------------------------------------------------------------- trained mode


def _two_domain(seed=0, n=600):
    doms = [DomainSpec(name="target"), DomainSpec(name="source")]
    return generate(DatasetConfig(seed=seed, num_supports=n, domains=doms))


def test_trained_mode_on_identical_representations():
    ds = _two_domain()
    concept = lambda x: x[:, : ds.concept_dim]
    r = trained_h_divergence(concept, ds, "target", DiscConfig(epochs=10))
    assert abs(r.a_distance - 1.0) <= 0.1 and r.mode == "min_over_family"


def test_trained_mode_on_separated_blocks():
    ds = _two_domain()
    r = trained_h_divergence(lambda x: x, ds, "target", DiscConfig(epochs=10))
    assert r.epsilon <= 0.02 and r.d_hat >= 1.9


def test_trained_mode_needs_samples():
    with pytest.raises(DivergenceError):
        trained_h_divergence(lambda x: x, _two_domain(n=60), "target")


# ---------------------------------------------------------------- bounds


def test_bound_matches_high_precision_oracle():
    b = target_risk_bound(BoundInputs(source_risk=0.1, n=1000, vc_dim=10, delta=0.05, beta=0.05, d_hat=0.2))
    assert b == pytest.approx(BOUND_EXAMPLE, rel=1e-12)


def test_bound_is_affine_in_divergence():
    base = BoundInputs(source_risk=0.1, n=500, vc_dim=7, delta=0.1)
    b0 = target_risk_bound(base)
    for x in (0.0, 0.3, 1.7, 2.0):
        assert target_risk_bound(base.model_copy(update={"d_hat": x})) == b0 + x


def test_bound_monotone_in_inputs():
    base = BoundInputs(source_risk=0.1, n=1000, vc_dim=10, delta=0.05)
    f = lambda **kw: target_risk_bound(base.model_copy(update=kw))
    assert f(n=2000) < f(n=1000)
    assert f(vc_dim=20) > f(vc_dim=10)
    assert f(delta=0.01) > f(delta=0.05)


def test_bound_needs_more_samples_than_dimension():
    with pytest.raises(DivergenceError, match="n > d"):
        target_risk_bound(BoundInputs(source_risk=0.0, n=10, vc_dim=10, delta=0.05))


def test_haussler_examples():
    assert haussler_sample_complexity(1000, 0.05, 0.1) == 100
    assert haussler_epsilon(1, 1.0, 5) == 0.0
    assert haussler_epsilon(50, 0.1, 40) == haussler_epsilon(50, 0.1, 20) / 2


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10**6), st.floats(0.001, 0.999), st.floats(0.001, 0.999))
def test_haussler_sample_complexity_is_minimal(t, delta, eps):
    m = haussler_sample_complexity(t, delta, eps)
    assert haussler_epsilon(t, delta, m) <= eps * (1 + 1e-12)
    if m > 1:
        assert haussler_epsilon(t, delta, m - 1) > eps


@pytest.mark.parametrize("args", [(0, 0.1, 0.1), (10, 0.0, 0.1), (10, 0.1, 1.0)])
def test_haussler_rejects_bad_inputs(args):
    with pytest.raises(DivergenceError):
        haussler_sample_complexity(*args)
