"""Network engine: forward oracles, analytic-vs-numeric gradients, losses,
and the optimizer against an independent scalar reimplementation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoloc.errors import ConfigError, DataError, NumericError, ShapeError, StateError
from geoloc.nn import (
    ActivationLayer,
    AdamState,
    BatchNormLayer,
    DenseLayer,
    DropoutLayer,
    Network,
    adam_step,
    bce_loss,
    finite_difference_grad,
    glorot_uniform,
    gradient_relative_error,
    he_uniform,
    mse_loss,
    sigmoid,
)

GRAD_TOL = 1e-4


def _dense(rng, out_dim, in_dim, activation="linear"):
    return DenseLayer(
        he_uniform(rng, out_dim, in_dim), rng.normal(0.0, 0.1, out_dim), activation
    )


def _check_gradients(net, loss_fn, x, target, h=1e-5, tol=GRAD_TOL):
    out = net.forward(x)
    _, grad = loss_fn(out, target)
    net.backward(grad)
    analytic = [g.copy() for g in net.gradients()]
    numeric = finite_difference_grad(net, loss_fn, x, target, h=h)
    err = gradient_relative_error(analytic, numeric)
    assert err < tol, f"gradient relative error {err}"


class TestDenseLayer:
    def test_forward_matches_hand_computation(self):
        layer = DenseLayer(np.array([[1.0, 2.0], [3.0, -1.0]]), np.array([0.5, -0.5]))
        out = layer.forward(np.array([[1.0, 1.0]]), training=True)
        np.testing.assert_array_equal(out, [[3.5, 1.5]])

    def test_relu_clips_negative(self):
        layer = DenseLayer(np.array([[1.0]]), np.array([0.0]), activation="relu")
        out = layer.forward(np.array([[-2.0], [3.0]]), training=True)
        np.testing.assert_array_equal(out, [[0.0], [3.0]])

    def test_gradients_linear(self, rng):
        net = Network([_dense(rng, 3, 4)])
        x = rng.normal(size=(8, 4))
        t = rng.normal(size=(8, 3))
        _check_gradients(net, mse_loss, x, t)

    def test_gradients_relu(self, rng):
        net = Network([_dense(rng, 3, 4, "relu")])
        x = rng.normal(size=(8, 4)) + 0.3
        t = rng.normal(size=(8, 3))
        _check_gradients(net, mse_loss, x, t)

    def test_backward_before_forward(self, rng):
        layer = _dense(rng, 2, 2)
        with pytest.raises(StateError):
            layer.backward(np.ones((1, 2)))

    def test_shape_validation(self, rng):
        with pytest.raises(ShapeError):
            DenseLayer(np.zeros((2, 3)), np.zeros(3))
        layer = _dense(rng, 2, 3)
        with pytest.raises(ShapeError):
            layer.forward(np.zeros((4, 5)), training=True)

    def test_unknown_activation(self):
        with pytest.raises(ConfigError):
            DenseLayer(np.zeros((1, 1)), np.zeros(1), activation="swish")


class TestBatchNorm:
    def test_forward_matches_hand_computation(self):
        bn = BatchNormLayer(1)
        x = np.array([[1.0], [3.0]])
        out = bn.forward(x, training=True)
        # mean 2, biased var 1 -> x_hat = (x - 2) / sqrt(1 + eps)
        expected = (x - 2.0) / math.sqrt(1.0 + 1e-5)
        np.testing.assert_allclose(out, expected, atol=1e-14)

    def test_running_stats_update_rule(self):
        bn = BatchNormLayer(1)
        x = np.array([[1.0], [3.0]])
        bn.forward(x, training=True)
        assert bn.running_mean[0] == pytest.approx(0.9 * 0.0 + 0.1 * 2.0, abs=1e-15)
        assert bn.running_var[0] == pytest.approx(0.9 * 1.0 + 0.1 * 1.0, abs=1e-15)
        bn.forward(x, training=True)
        assert bn.running_mean[0] == pytest.approx(0.9 * 0.2 + 0.1 * 2.0, abs=1e-15)

    def test_inference_uses_running_stats(self):
        bn = BatchNormLayer(1)
        bn.running_mean[...] = 5.0
        bn.running_var[...] = 4.0
        out = bn.forward(np.array([[7.0]]), training=False)
        assert out[0, 0] == pytest.approx(2.0 / math.sqrt(4.0 + 1e-5), abs=1e-12)

    def test_gamma_beta_affect_output(self):
        bn = BatchNormLayer(1)
        bn.gamma[...] = 3.0
        bn.beta[...] = -1.0
        out = bn.forward(np.array([[1.0], [3.0]]), training=True)
        expected = 3.0 * (np.array([[1.0], [3.0]]) - 2.0) / math.sqrt(1 + 1e-5) - 1.0
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_gradients_through_batchnorm(self, rng):
        net = Network([_dense(rng, 4, 3), BatchNormLayer(4), ActivationLayer("relu")])
        x = rng.normal(size=(12, 3))
        t = rng.normal(size=(12, 4))
        _check_gradients(net, mse_loss, x, t)

    def test_single_sample_training_batch_rejected(self):
        bn = BatchNormLayer(2)
        with pytest.raises(DataError):
            bn.forward(np.zeros((1, 2)), training=True)

    def test_momentum_validation(self):
        with pytest.raises(ConfigError):
            BatchNormLayer(2, momentum=1.0)


class TestDropout:
    def test_identity_at_inference(self, rng):
        layer = DropoutLayer(0.5, rng)
        x = rng.normal(size=(4, 4))
        np.testing.assert_array_equal(layer.forward(x, training=False), x)

    def test_rate_zero_is_identity(self, rng):
        layer = DropoutLayer(0.0, rng)
        x = rng.normal(size=(4, 4))
        np.testing.assert_array_equal(layer.forward(x, training=True), x)

    def test_inverted_scaling(self):
        layer = DropoutLayer(0.25, np.random.default_rng(0))
        x = np.ones((200, 50))
        out = layer.forward(x, training=True)
        kept = out != 0.0
        np.testing.assert_allclose(out[kept], 1.0 / 0.75)
        assert 0.70 < kept.mean() < 0.80

    def test_deterministic_per_seed(self):
        a = DropoutLayer(0.5, np.random.default_rng(7)).forward(np.ones((5, 5)), True)
        b = DropoutLayer(0.5, np.random.default_rng(7)).forward(np.ones((5, 5)), True)
        np.testing.assert_array_equal(a, b)

    def test_backward_masks_gradient(self):
        layer = DropoutLayer(0.5, np.random.default_rng(1))
        x = np.ones((6, 6))
        out = layer.forward(x, training=True)
        grad = layer.backward(np.ones_like(x))
        np.testing.assert_array_equal(grad, out)

    def test_rate_validation(self):
        with pytest.raises(ConfigError):
            DropoutLayer(1.0)
        with pytest.raises(ConfigError):
            DropoutLayer(-0.1)


class TestComposedNetworks:
    def test_three_layer_gradients_mse(self, rng):
        net = Network(
            [
                _dense(rng, 6, 5),
                BatchNormLayer(6),
                ActivationLayer("relu"),
                _dense(rng, 4, 6, "relu"),
                _dense(rng, 2, 4),
            ]
        )
        x = rng.normal(size=(16, 5))
        t = rng.normal(size=(16, 2))
        _check_gradients(net, mse_loss, x, t)

    def test_three_layer_gradients_bce(self, rng):
        net = Network(
            [
                _dense(rng, 6, 5),
                BatchNormLayer(6),
                ActivationLayer("relu"),
                _dense(rng, 1, 6),
            ]
        )
        x = rng.normal(size=(16, 5))
        t = (rng.random((16, 1)) > 0.5).astype(float)
        _check_gradients(net, bce_loss, x, t)

    def test_oracle_rejects_active_dropout(self, rng):
        net = Network([_dense(rng, 2, 2), DropoutLayer(0.5, rng)])
        with pytest.raises(ConfigError):
            finite_difference_grad(net, mse_loss, np.zeros((2, 2)), np.zeros((2, 2)))

    def test_oracle_requires_training_mode(self, rng):
        net = Network([_dense(rng, 2, 2)])
        net.set_mode("infer")
        with pytest.raises(StateError):
            finite_difference_grad(net, mse_loss, np.zeros((2, 2)), np.zeros((2, 2)))

    def test_oracle_preserves_running_stats(self, rng):
        net = Network([_dense(rng, 3, 2), BatchNormLayer(3)])
        x = rng.normal(size=(6, 2))
        t = rng.normal(size=(6, 3))
        bn = net.layers[1]
        net.forward(x)
        _, grad = mse_loss(net.forward(x), t)
        net.backward(grad)
        before = (bn.running_mean.copy(), bn.running_var.copy())
        finite_difference_grad(net, mse_loss, x, t)
        np.testing.assert_array_equal(bn.running_mean, before[0])
        np.testing.assert_array_equal(bn.running_var, before[1])

    def test_mode_validation(self, rng):
        net = Network([_dense(rng, 2, 2)])
        with pytest.raises(ConfigError):
            net.set_mode("evaluate")


class TestLosses:
    def test_mse_value_and_grad(self):
        pred = np.array([[1.0, 2.0], [3.0, 4.0]])
        target = np.array([[0.0, 2.0], [3.0, 2.0]])
        loss, grad = mse_loss(pred, target)
        assert loss == pytest.approx((1.0 + 0.0 + 0.0 + 4.0) / 4.0, abs=1e-15)
        np.testing.assert_allclose(grad, 2.0 * (pred - target) / 4.0, atol=1e-15)

    def test_mse_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse_loss(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_bce_matches_naive_formula(self, rng):
        z = rng.normal(size=(10, 1))
        y = (rng.random((10, 1)) > 0.5).astype(float)
        loss, _ = bce_loss(z, y)
        p = 1.0 / (1.0 + np.exp(-z))
        naive = -np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
        assert loss == pytest.approx(naive, rel=1e-12)

    def test_bce_stable_at_extreme_logits(self):
        loss, grad = bce_loss(np.array([[1000.0], [-1000.0]]), np.array([[1.0], [0.0]]))
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert np.all(np.isfinite(grad))
        loss_bad, _ = bce_loss(np.array([[-1000.0]]), np.array([[1.0]]))
        assert loss_bad == pytest.approx(1000.0, rel=1e-12)

    def test_bce_grad_matches_finite_difference(self):
        z = np.array([[0.3], [-0.7], [2.0]])
        y = np.array([[1.0], [0.0], [1.0]])
        _, grad = bce_loss(z, y)
        h = 1e-6
        for i in range(3):
            zp, zm = z.copy(), z.copy()
            zp[i] += h
            zm[i] -= h
            num = (bce_loss(zp, y)[0] - bce_loss(zm, y)[0]) / (2 * h)
            assert grad[i, 0] == pytest.approx(num, rel=1e-6)

    def test_bce_rejects_non_binary_targets(self):
        with pytest.raises(DataError):
            bce_loss(np.zeros((2, 1)), np.array([[0.5], [1.0]]))

    def test_sigmoid_matches_reference(self):
        z = np.array([-3.0, 0.0, 3.0])
        np.testing.assert_allclose(sigmoid(z), 1.0 / (1.0 + np.exp(-z)), atol=1e-15)


def _scalar_adam_reference(p0, grads, lr, beta1, beta2, eps):
    """Textbook Adam on a single scalar, plain Python floats."""
    p, m, v = p0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p -= lr * m_hat / (math.sqrt(v_hat) + eps)
    return p


class TestAdam:
    def test_matches_scalar_reference(self):
        grads = [0.3, -1.2, 0.8, 0.05, -0.4]
        p = np.array([2.0])
        state = AdamState.for_parameters([p])
        for g in grads:
            adam_step([p], [np.array([g])], state, lr=5e-4, beta1=0.1, beta2=0.99)
        expected = _scalar_adam_reference(2.0, grads, 5e-4, 0.1, 0.99, 1e-8)
        assert p[0] == pytest.approx(expected, rel=1e-14)

    def test_beta2_zero_reduces_to_sgd(self):
        grads = [0.5, -0.25, 1.5, 0.0, -2.0]
        p = np.array([1.0])
        state = AdamState.for_parameters([p])
        expected = 1.0
        for g in grads:
            adam_step([p], [np.array([g])], state, lr=0.01, beta1=0.0, beta2=0.0)
            expected -= 0.01 * g
        assert p[0] == expected

    def test_beta2_zero_keeps_momentum(self):
        # with beta1 > 0 the step is bias-corrected momentum SGD
        p = np.array([0.0])
        state = AdamState.for_parameters([p])
        adam_step([p], [np.array([1.0])], state, lr=0.1, beta1=0.5, beta2=0.0)
        # m = 0.5*0 + 0.5*1; m_hat = 0.5 / (1 - 0.5) = 1.0
        assert p[0] == pytest.approx(-0.1, abs=1e-15)

    def test_non_finite_gradient_raises(self):
        p = np.array([1.0])
        state = AdamState.for_parameters([p])
        with pytest.raises(NumericError):
            adam_step([p], [np.array([np.nan])], state)

    def test_hyperparameter_validation(self):
        p = [np.array([1.0])]
        g = [np.array([0.1])]
        state = AdamState.for_parameters(p)
        with pytest.raises(ConfigError):
            adam_step(p, g, state, lr=0.0)
        with pytest.raises(ConfigError):
            adam_step(p, g, state, beta1=1.0)
        with pytest.raises(ConfigError):
            adam_step(p, g, state, eps=0.0)

    def test_state_mismatch(self):
        p = [np.array([1.0]), np.array([2.0])]
        state = AdamState.for_parameters(p[:1])
        with pytest.raises(ShapeError):
            adam_step(p, [np.array([0.1]), np.array([0.1])], state)


class TestInitializers:
    def test_he_uniform_bounds_and_shape(self, rng):
        w = he_uniform(rng, 30, 20)
        assert w.shape == (30, 20)
        limit = math.sqrt(6.0 / 20)
        assert np.all(np.abs(w) <= limit)

    def test_glorot_uniform_bounds(self, rng):
        w = glorot_uniform(rng, 30, 20)
        limit = math.sqrt(6.0 / 50)
        assert np.all(np.abs(w) <= limit)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_gradient_property_random_networks(seed):
    """Any small random dense/bn network passes the finite-difference check."""
    rng = np.random.default_rng(seed)
    layers = [_dense(rng, 5, 4)]
    if seed % 2 == 0:
        layers += [BatchNormLayer(5), ActivationLayer("relu")]
    layers.append(_dense(rng, 2, 5))
    net = Network(layers)
    x = rng.normal(size=(8, 4))
    t = rng.normal(size=(8, 2))
    _check_gradients(net, mse_loss, x, t)
