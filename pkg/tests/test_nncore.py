import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metacenter.errors import DataError, NumericalError, TrainingError
from metacenter.nncore import (
    Adam,
    DenseLayer,
    Network,
    NormalizedSumLayer,
    RbfLayer,
    gradient_check,
    init_normal,
    mse_loss,
)


def _rbf(k=4, n=2, seed=0):
    rng = np.random.default_rng(seed)
    return RbfLayer(rng.normal(size=(k, n)), rng.normal(scale=0.3, size=k))


class TestRbfForward:
    def test_at_center_activation_is_one(self):
        layer = RbfLayer(np.array([[0.5, -0.2]]), np.array([0.0]))
        phi = layer.forward(np.array([[0.5, -0.2]]))
        assert phi[0, 0] == 1.0

    def test_unit_normalized_distance(self):
        # ||x - c|| = sigma gives exp(-1)
        layer = RbfLayer(np.array([[0.0, 0.0]]), np.array([math.log(2.0)]))
        phi = layer.forward(np.array([[2.0, 0.0]]))
        assert phi[0, 0] == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_direct_evaluation(self):
        layer = RbfLayer(np.array([[0.0, 0.0]]), np.array([math.log(2.0)]))
        phi = layer.forward(np.array([[1.0, 0.0]]))
        assert phi[0, 0] == pytest.approx(math.exp(-0.25), rel=1e-12)
        assert phi[0, 0] == pytest.approx(0.778801, abs=1e-6)

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=2))
    @settings(max_examples=50, deadline=None)
    def test_activations_in_unit_interval(self, point):
        layer = _rbf()
        phi = layer.forward(np.array([point]))
        assert np.all(phi > 0.0) and np.all(phi <= 1.0)


class TestRbfBackward:
    def test_zero_gradients_at_center(self):
        layer = RbfLayer(np.array([[0.5, -0.2]]), np.array([0.1]))
        layer.forward(np.array([[0.5, -0.2]]))
        gx = layer.backward(np.ones((1, 1)))
        np.testing.assert_array_equal(gx, 0.0)
        np.testing.assert_array_equal(layer.dc, 0.0)
        np.testing.assert_array_equal(layer.drho, 0.0)

    def test_matches_finite_differences(self):
        # independent oracle: central differences on the raw kernel
        layer = _rbf(seed=3)
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 2))
        net = Network([layer])
        y = rng.normal(size=(3, 4))
        assert gradient_check(net, x, y, h=1e-5) < 1e-4

    def test_backprop_linearity(self):
        layer = _rbf(seed=5)
        x = np.random.default_rng(6).normal(size=(2, 2))
        layer.forward(x)
        layer.backward(np.ones((2, 4)))
        dc1, drho1 = layer.dc.copy(), layer.drho.copy()
        layer.dc[...] = 0.0
        layer.drho[...] = 0.0
        layer.forward(x)
        layer.backward(2.0 * np.ones((2, 4)))
        np.testing.assert_allclose(layer.dc, 2.0 * dc1, rtol=1e-12)
        np.testing.assert_allclose(layer.drho, 2.0 * drho1, rtol=1e-12)


class TestNormalizedSum:
    def test_one_hot_selects_column(self):
        w = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        layer = NormalizedSumLayer(w)
        out = layer.forward(np.array([[0.0, 1.0, 0.0]]))
        np.testing.assert_allclose(out[0], w[:, 1])

    def test_uniform_gives_row_means(self):
        w = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        layer = NormalizedSumLayer(w)
        out = layer.forward(np.ones((1, 3)))
        np.testing.assert_allclose(out[0], w.mean(axis=1))

    def test_hand_evaluated_case(self):
        w = np.array([[0.0, 0.0], [0.0, 2.0], [1.0, 0.0]])
        layer = NormalizedSumLayer(w)
        out = layer.forward(np.array([[1.0, 1.0]]))
        np.testing.assert_allclose(out[0], [0.0, 1.0, 0.5])

    def test_underflow_error(self):
        layer = NormalizedSumLayer(np.ones((2, 3)))
        with pytest.raises(NumericalError):
            layer.forward(np.zeros((1, 3)))

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_output_in_convex_hull(self, seed):
        rng = np.random.default_rng(seed)
        w = rng.normal(size=(3, 6))
        phi = rng.uniform(1e-6, 1.0, size=(4, 6))
        layer = NormalizedSumLayer(w)
        out = layer.forward(phi)
        p = phi / phi.sum(axis=1, keepdims=True)
        assert np.all(np.abs(p.sum(axis=1) - 1.0) < 1e-12)
        lo = w.min(axis=1) - 1e-12
        hi = w.max(axis=1) + 1e-12
        assert np.all(out >= lo) and np.all(out <= hi)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(8)
        net = Network([NormalizedSumLayer(rng.normal(size=(2, 5)))])
        x = rng.uniform(0.05, 1.0, size=(3, 5))
        y = rng.normal(size=(3, 2))
        assert gradient_check(net, x, y, h=1e-5) < 1e-4


class TestMseLoss:
    def test_perfect_prediction(self):
        y = np.array([[1.0, 2.0]])
        loss, grad = mse_loss(y, y)
        assert loss == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_direct_arithmetic(self):
        loss, _ = mse_loss(np.array([[1.0, 2.0, 3.0]]), np.zeros((1, 3)))
        assert loss == pytest.approx((1 + 4 + 9) / 3)

    def test_rmse_correspondence(self):
        # per-dimension MSE m corresponds to an RMS position error sqrt(m)
        rng = np.random.default_rng(1)
        pred = rng.normal(size=(100, 3))
        target = rng.normal(size=(100, 3))
        loss, _ = mse_loss(pred, target)
        rms = np.sqrt(((pred - target) ** 2).mean())
        assert math.sqrt(loss) == pytest.approx(rms, rel=1e-12)
        assert math.sqrt(6.65) == pytest.approx(2.58, abs=0.005)

    def test_empty_batch(self):
        with pytest.raises(DataError):
            mse_loss(np.zeros((0, 3)), np.zeros((0, 3)))

    def test_gradient_direction(self):
        pred = np.array([[2.0, 0.0]])
        target = np.array([[1.0, 0.0]])
        _, grad = mse_loss(pred, target)
        np.testing.assert_allclose(grad, [[1.0, 0.0]])


class TestAdam:
    def test_zero_gradient_is_noop(self):
        p = np.array([1.0, -2.0])
        opt = Adam([p], learning_rate=0.01)
        opt.step([np.zeros(2)])
        np.testing.assert_array_equal(p, [1.0, -2.0])
        assert opt.step_count == 1

    def test_first_step_hand_execution(self):
        # t=1: m_hat = g, v_hat = g^2, update = -lr * g / (|g| + eps)
        p = np.array([0.0])
        opt = Adam([p], learning_rate=0.01)
        opt.step([np.array([1.0])])
        expected = -0.01 * 1.0 / (1.0 + 1e-8)
        assert p[0] == pytest.approx(expected, rel=1e-12)

    def test_second_step_not_larger(self):
        # hand-executing the recurrences for t=2 gives an equal-magnitude step
        p = np.array([0.0])
        opt = Adam([p], learning_rate=0.01)
        opt.step([np.array([1.0])])
        first = abs(p[0])
        before = p[0]
        opt.step([np.array([1.0])])
        second = abs(p[0] - before)
        m2 = 0.9 * 0.1 + 0.1 * 1.0
        v2 = 0.999 * 0.001 + 0.001 * 1.0
        expected = 0.01 * (m2 / (1 - 0.9 ** 2)) / (math.sqrt(v2 / (1 - 0.999 ** 2)) + 1e-8)
        assert second == pytest.approx(expected, rel=1e-12)
        assert second <= first + 1e-6

    def test_nonfinite_gradient_raises(self):
        opt = Adam([np.zeros(1)])
        with pytest.raises(TrainingError):
            opt.step([np.array([np.nan])])


class TestInitNormal:
    def test_determinism(self):
        a = init_normal((5, 3), 7, 0.5)
        b = init_normal((5, 3), 7, 0.5)
        np.testing.assert_array_equal(a, b)

    def test_scale_statistics(self):
        fan_in = 20
        draws = init_normal((100_000,), 0, 1.0 / math.sqrt(fan_in))
        assert draws.std() == pytest.approx(1.0 / math.sqrt(fan_in), rel=0.05)

    def test_symmetry_broken(self):
        draws = init_normal((4, 4), 1, 0.1)
        assert len(np.unique(draws)) > 1


class TestGradientCheck:
    def test_linear_network_quadratic_loss(self):
        # loss is exactly quadratic in the parameters of a linear layer, so
        # central differences are exact up to float noise
        rng = np.random.default_rng(2)
        layer = DenseLayer(rng.normal(size=(2, 3)), rng.normal(size=2), "identity")
        net = Network([layer])
        x = rng.normal(size=(8, 3))
        y = rng.normal(size=(8, 2))
        assert gradient_check(net, x, y, h=1e-5) < 1e-6

    def test_stable_under_h_doubling(self):
        rng = np.random.default_rng(3)
        layer = DenseLayer(rng.normal(size=(2, 3)), rng.normal(size=2), "relu")
        net = Network([layer])
        x = rng.normal(size=(8, 3)) + 0.05
        y = rng.normal(size=(8, 2))
        assert (gradient_check(net, x, y, h=1e-5) < 1e-4) == \
               (gradient_check(net, x, y, h=2e-5) < 1e-4)

    def test_two_layer_relu_network(self):
        rng = np.random.default_rng(4)
        net = Network([
            DenseLayer(rng.normal(size=(8, 3)), np.zeros(8), "relu"),
            DenseLayer(rng.normal(size=(2, 8)), np.zeros(2), "identity"),
        ])
        x = rng.normal(size=(6, 3))
        y = rng.normal(size=(6, 2))
        assert gradient_check(net, x, y, h=1e-5) < 1e-4


class TestInferencePath:
    def test_infer_matches_forward(self):
        rng = np.random.default_rng(9)
        net = Network([
            RbfLayer(rng.normal(size=(6, 3)), rng.normal(scale=0.2, size=6)),
            NormalizedSumLayer(rng.normal(size=(2, 6))),
        ])
        x = rng.normal(size=(50, 3))
        np.testing.assert_allclose(net.infer(x), net.forward(x), rtol=1e-9, atol=1e-12)

    def test_dense_infer_matches_forward(self):
        rng = np.random.default_rng(10)
        layer = DenseLayer(rng.normal(size=(4, 3)), rng.normal(size=4), "relu")
        x = rng.normal(size=(20, 3))
        np.testing.assert_array_equal(layer.infer(x), layer.forward(x))
