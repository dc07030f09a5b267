import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nci_lab import autodiff as ad
from nci_lab.gradcheck import max_relative_error, random_problem, relative_errors
from nci_lab.nn import Layer, ModelParams, init_mlp
from nci_lab.optim import NonFiniteGradient, OptimizerState, optimizer_step

# -ln(0.5), evaluated with mpmath at 50 digits
LN2 = 0.6931471805599453


def test_sigmoid_of_zero_is_half():
    t = ad.Tape()
    assert ad.forward_op("sigmoid", t.leaf(0.0)).item() == 0.5


def test_relu_clips_negative():
    t = ad.Tape()
    assert ad.forward_op("relu", t.leaf(-3.0)).item() == 0.0


def test_bce_half_against_one():
    t = ad.Tape()
    assert ad.bce(t.leaf([[0.5]]), [[1.0]]).data[0, 0] == pytest.approx(LN2, abs=1e-15)


def test_square_derivative():
    t = ad.Tape()
    x = t.leaf(3.0)
    t.backward(x * x)
    assert x.grad == 6.0


def test_unreachable_leaf_gets_zero_gradient():
    t = ad.Tape()
    x, w = t.leaf(2.0), t.leaf([1.0, 2.0])
    t.backward(t.constant(5.0) + x)
    assert x.grad == 1.0
    np.testing.assert_array_equal(w.grad, [0.0, 0.0])


def test_non_scalar_root_rejected():
    t = ad.Tape()
    x = t.leaf([1.0, 2.0])
    with pytest.raises(ad.BackwardError):
        t.backward(x * x)


def test_shape_mismatch_is_descriptive():
    t = ad.Tape()
    with pytest.raises(ad.ShapeError, match="matmul"):
        ad.matmul(t.leaf(np.ones((2, 3))), t.leaf(np.ones((2, 3))))
    with pytest.raises(ad.ShapeError):
        ad.add(t.leaf(np.ones((2, 3))), t.leaf(np.ones((3, 2))))


def test_unknown_op():
    with pytest.raises(ValueError, match="unknown operation"):
        ad.forward_op("conv", None)


def test_leading_batch_broadcast_gradient_sums_over_rows():
    t = ad.Tape()
    x = t.leaf(np.arange(6.0).reshape(3, 2))
    b = t.leaf([1.0, -1.0])
    t.backward(ad.sum_all(ad.add(x, b)))
    np.testing.assert_array_equal(b.grad, [3.0, 3.0])


def test_log_is_clamped_and_finite():
    t = ad.Tape()
    assert np.isfinite(ad.log(t.leaf([0.0, -1.0])).data).all()


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_central_differences(seed):
    assert max_relative_error(seed) < 1e-4


def test_gradcheck_covers_every_parameter():
    net, x, y, _ = random_problem(3)
    errs = relative_errors(net, x, y)
    assert set(errs) == set(net.named_arrays())
    assert all(e.shape == net.named_arrays()[k].shape for k, e in errs.items())


def test_forward_is_deterministic():
    net, x, y, _ = random_problem(7)

    def run():
        t = ad.Tape()
        p = net.bind(t)
        loss = ad.mean(ad.softmax_xent(net.forward(t.constant(x), p), y))
        t.backward(loss)
        return loss.item(), [p[k].grad.tobytes() for k in sorted(p)]

    assert run() == run()


finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 3), elements=finite), st.lists(st.integers(0, 2), min_size=4, max_size=4))
def test_softmax_xent_finite_and_nonnegative(logits, labels):
    t = ad.Tape()
    loss = ad.softmax_xent(t.leaf(logits), labels)
    assert np.isfinite(loss.data).all() and (loss.data >= -1e-12).all()


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (5, 1), elements=st.floats(-1e3, 1e3)), st.sampled_from([0.0, 1.0]))
def test_bce_of_sigmoid_finite_for_any_logit(z, y):
    t = ad.Tape()
    out = ad.bce(ad.sigmoid(t.leaf(z)), np.full((5, 1), y))
    assert np.isfinite(out.data).all()


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 1.0))
def test_bce_label_flip_symmetry(p):
    t = ad.Tape()
    a = ad.bce(t.leaf([[p]]), [[0.0]]).data
    b = ad.bce(t.leaf([[1.0 - p]]), [[1.0]]).data
    assert a[0, 0] == pytest.approx(b[0, 0], rel=1e-9, abs=1e-9)


# ---------------------------------------------------------------- nn


def test_init_is_glorot_uniform_with_zero_bias():
    net = init_mlp([10, 6], ["tanh"], "encoder", np.random.default_rng(0))
    limit = math.sqrt(6 / 16)
    assert np.abs(net.layers[0].weight).max() <= limit
    np.testing.assert_array_equal(net.layers[0].bias, 0.0)


def test_layers_must_chain():
    with pytest.raises(ValueError):
        ModelParams("encoder", [Layer(np.zeros((3, 4)), np.zeros(4), "relu"), Layer(np.zeros((5, 2)), np.zeros(2), "relu")])


def test_predict_matches_tape_forward():
    net, x, _, _ = random_problem(11)
    t = ad.Tape()
    out = net.forward(t.constant(x), net.bind(t))
    np.testing.assert_allclose(net.predict(x), out.data, rtol=0, atol=1e-15)


# ---------------------------------------------------------------- optim


def _scalar_net(value: float) -> ModelParams:
    return ModelParams("head", [Layer(np.array([[value]]), np.zeros(1), "identity")])


def test_sgd_one_step():
    new = optimizer_step(_scalar_net(1.0), {"head.0.weight": np.array([[0.5]]), "head.0.bias": np.zeros(1)}, OptimizerState("sgd", 0.1))
    assert new.layers[0].weight[0, 0] == pytest.approx(0.95, abs=1e-15)


def test_zero_gradient_leaves_parameters():
    net = _scalar_net(1.0)
    zeros = {k: np.zeros_like(v) for k, v in net.named_arrays().items()}
    for kind in ("sgd", "adam"):
        new = optimizer_step(net, zeros, OptimizerState(kind, 0.1))
        assert new.layers[0].weight[0, 0] == 1.0


def test_adam_first_step_moves_by_lr():
    state = OptimizerState("adam", 0.001)
    new = optimizer_step(_scalar_net(1.0), {"head.0.weight": np.array([[1.0]]), "head.0.bias": np.zeros(1)}, state)
    # bias-corrected m/sqrt(v) = 1, so the step is lr / (1 + eps)
    assert 1.0 - new.layers[0].weight[0, 0] == pytest.approx(0.001 / (1 + 1e-8), rel=1e-9)
    assert state.step == 1


def test_non_finite_gradient_aborts_with_layer_name():
    with pytest.raises(NonFiniteGradient, match="head.0.weight"):
        optimizer_step(_scalar_net(1.0), {"head.0.weight": np.array([[np.inf]]), "head.0.bias": np.zeros(1)}, OptimizerState())


def test_gradient_shape_checked():
    with pytest.raises(ValueError):
        optimizer_step(_scalar_net(1.0), {"head.0.weight": np.zeros((2, 2)), "head.0.bias": np.zeros(1)}, OptimizerState())
