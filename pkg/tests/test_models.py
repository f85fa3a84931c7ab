"""Loss/gradient correctness against independent oracles."""

import math

import numpy as np
import pytest

from dslsim.core import RngStream
from dslsim.data import Dataset
from dslsim.models import (
    ModelSpec,
    accuracy,
    fd_grad,
    grad,
    gradient_check,
    init_params,
    loss,
    unpack,
)

LINEAR = ModelSpec("linear", d_in=7, num_classes=4)
MLP = ModelSpec("mlp", d_in=7, num_classes=4, hidden=5)


def random_data(n=30, d=7, c=4, seed=0):
    g = np.random.default_rng(seed)
    return Dataset(g.standard_normal((n, d)), g.integers(0, c, n))


def reference_loss(spec, w, data, mu=0.0, anchor=None):
    """Slow per-sample reimplementation used only as a test oracle."""
    total = 0.0
    for x, y in zip(data.features, data.labels):
        if spec.kind == "linear":
            weights, bias = unpack(spec, w)
            z = x @ weights + bias
        else:
            w1, b1, w2, b2 = unpack(spec, w)
            z = np.tanh(x @ w1 + b1) @ w2 + b2
        z = z - z.max()
        total += math.log(np.exp(z).sum()) - z[y]
    value = total / len(data)
    if anchor is not None:
        value += 0.5 * mu * float((w - anchor) @ (w - anchor))
    return value


class TestParamDim:
    def test_linear(self):
        assert LINEAR.param_dim == 7 * 4 + 4

    def test_mlp(self):
        assert MLP.param_dim == 7 * 5 + 5 + 5 * 4 + 4


class TestLoss:
    @pytest.mark.parametrize("spec", [LINEAR, MLP], ids=["linear", "mlp"])
    def test_zero_weights_give_log_c(self, spec):
        # uniform softmax: loss is exactly ln(C)
        data = random_data()
        assert loss(spec, np.zeros(spec.param_dim), data) == pytest.approx(
            math.log(4), abs=1e-12
        )

    @pytest.mark.parametrize("spec", [LINEAR, MLP], ids=["linear", "mlp"])
    def test_anchor_at_w_adds_nothing(self, spec):
        data = random_data()
        w = init_params(spec, RngStream(1, "init"))
        assert loss(spec, w, data, mu=2.5, anchor=w) == loss(spec, w, data, mu=0.0)

    @pytest.mark.parametrize("spec", [LINEAR, MLP], ids=["linear", "mlp"])
    def test_matches_slow_reference(self, spec):
        data = random_data(seed=3)
        g = np.random.default_rng(4)
        w = g.uniform(-1, 1, spec.param_dim)
        anchor = g.uniform(-1, 1, spec.param_dim)
        ours = loss(spec, w, data, mu=0.7, anchor=anchor)
        ref = reference_loss(spec, w, data, mu=0.7, anchor=anchor)
        assert ours == pytest.approx(ref, abs=1e-10)

    def test_sample_order_invariance(self):
        data = random_data(seed=5)
        perm = np.random.default_rng(6).permutation(len(data))
        w = init_params(LINEAR, RngStream(2, "init"))
        assert loss(LINEAR, w, data) == pytest.approx(
            loss(LINEAR, w, data.subset(perm)), abs=1e-12
        )

    @pytest.mark.parametrize("spec", [LINEAR, MLP], ids=["linear", "mlp"])
    def test_finite_at_huge_weights(self, spec):
        data = random_data()
        w = np.full(spec.param_dim, 1e6)
        assert math.isfinite(loss(spec, w, data))

    def test_cross_entropy_nonnegative(self):
        data = random_data(seed=8)
        for trial in range(5):
            w = np.random.default_rng(trial).uniform(-2, 2, LINEAR.param_dim)
            assert loss(LINEAR, w, data) >= 0.0


class TestGrad:
    @pytest.mark.parametrize("spec", [LINEAR, MLP], ids=["linear", "mlp"])
    def test_finite_difference_agreement(self, spec):
        # the acceptance gradient oracle: 20 random probes, rel err < 1e-5
        err = gradient_check(spec, RngStream(13, "gradcheck"), n_probes=20, step=1e-5)
        assert err < 1e-5

    def test_duplicated_sample_batch_matches_single(self):
        data = random_data(n=1, seed=9)
        dup = data.subset([0, 0, 0, 0])
        w = init_params(LINEAR, RngStream(3, "init"))
        assert np.allclose(grad(LINEAR, w, data), grad(LINEAR, w, dup), atol=1e-14)

    @pytest.mark.parametrize("spec", [LINEAR, MLP], ids=["linear", "mlp"])
    def test_proximal_term_is_linear_in_w(self, spec):
        # freezing the data term by differencing isolates mu*(w - anchor) = w
        data = random_data(seed=10)
        w = np.random.default_rng(11).uniform(-1, 1, spec.param_dim)
        diff = grad(spec, w, data, mu=1.0, anchor=np.zeros(spec.param_dim)) - grad(
            spec, w, data, mu=0.0
        )
        assert np.allclose(diff, w, atol=1e-12)


class TestAccuracy:
    def test_zero_weights_predict_class_zero(self):
        data = random_data(seed=12)
        freq0 = float((data.labels == 0).mean())
        assert accuracy(LINEAR, np.zeros(LINEAR.param_dim), data) == pytest.approx(freq0)

    def test_single_correct_sample(self):
        data = Dataset(np.array([[1.0, 0.0]]), np.array([1]))
        spec = ModelSpec("linear", d_in=2, num_classes=3)
        w = np.zeros(spec.param_dim)
        weights, _ = unpack(spec, w)
        weights[0, 1] = 5.0  # x=(1,0) now scores class 1 highest
        assert accuracy(spec, w, data) == 1.0

    def test_fitted_model_separates_easy_data(self):
        from dslsim.data import gen_synthetic

        ds = gen_synthetic(600, 6, 3, 6.0, RngStream(7, "datagen"))
        train, hold = ds.subset(range(400)), ds.subset(range(400, 600))
        spec = ModelSpec("linear", d_in=6, num_classes=3)
        w = np.zeros(spec.param_dim)
        for _ in range(300):
            w -= 0.5 * grad(spec, w, train)
        assert accuracy(spec, w, hold) > 0.95

    def test_range(self):
        data = random_data(seed=14)
        for trial in range(5):
            w = np.random.default_rng(trial).uniform(-3, 3, MLP.param_dim)
            assert 0.0 <= accuracy(MLP, w, data) <= 1.0


def test_fd_grad_probes_only_requested_coords():
    data = random_data(seed=15)
    w = init_params(LINEAR, RngStream(4, "init"))
    full = grad(LINEAR, w, data)
    probe = fd_grad(LINEAR, w, data, coords=[0, 5, 11])
    assert np.allclose(probe, full[[0, 5, 11]], rtol=1e-6, atol=1e-8)
