import json
import math

import numpy as np
import pytest

from buildtype.errors import (
    CorruptModel,
    InvalidLayerLadder,
    LengthMismatch,
    NonFiniteGradient,
    SchemaMismatch,
    ShapeMismatch,
)
from buildtype.network import (
    Mlp,
    backward,
    bce_loss,
    forward,
    forward_probs,
    init_mlp,
    init_optimizer,
    amsgrad_step,
    leaky_relu,
    load_model,
    relu,
    save_model,
    sigmoid,
)


class TestActivations:
    def test_leaky_relu(self):
        assert leaky_relu(-1.0, 0.01) == -0.01
        assert leaky_relu(2.0, 0.01) == 2.0
        assert leaky_relu(0.0, 0.01) == 0.0

    def test_relu(self):
        assert relu(-3.0) == 0.0
        assert relu(5.0) == 5.0
        assert relu(0.0) == 0.0

    def test_sigmoid_reference_points(self):
        assert sigmoid(0.0) == 0.5
        np.testing.assert_allclose(sigmoid(math.log(3)), 0.75, rtol=1e-12)
        np.testing.assert_allclose(sigmoid(-math.log(3)), 0.25, rtol=1e-12)

    def test_sigmoid_symmetry(self):
        rng = np.random.default_rng(42)
        x = rng.uniform(-30, 30, size=5000)
        np.testing.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-12)

    def test_sigmoid_stable_at_extremes(self):
        # no overflow or invalid ops; gradual underflow to 0 is fine
        with np.errstate(over="raise", invalid="raise"):
            assert sigmoid(1000.0) == 1.0
            assert sigmoid(-1000.0) == 0.0

    def test_sigmoid_monotone(self):
        x = np.linspace(-20, 20, 2001)
        assert np.all(np.diff(sigmoid(x)) > 0)


class TestInit:
    def test_shapes_follow_ladder(self):
        mlp = init_mlp([7, 1024, 512, 128, 64, 32, 16, 8, 1], seed=0)
        assert mlp.weights[0].shape == (7, 1024)
        assert mlp.weights[-1].shape == (8, 1)
        assert [w.shape for w in mlp.weights] == [
            (7, 1024), (1024, 512), (512, 128), (128, 64),
            (64, 32), (32, 16), (16, 8), (8, 1),
        ]

    def test_biases_zero(self):
        mlp = init_mlp([7, 16, 8, 1], seed=3)
        for b in mlp.biases:
            np.testing.assert_array_equal(b, 0.0)

    def test_deterministic_per_seed(self):
        a = init_mlp([7, 16, 8, 1], seed=5)
        b = init_mlp([7, 16, 8, 1], seed=5)
        c = init_mlp([7, 16, 8, 1], seed=6)
        assert np.array_equal(a.theta, b.theta)
        assert not np.array_equal(a.theta, c.theta)

    def test_glorot_bounds(self):
        mlp = init_mlp([100, 50, 1], seed=1)
        limit = math.sqrt(6.0 / 150.0)
        assert np.all(np.abs(mlp.weights[0]) <= limit)

    def test_invalid_ladders(self):
        with pytest.raises(InvalidLayerLadder):
            init_mlp([7], seed=0)
        with pytest.raises(InvalidLayerLadder):
            init_mlp([7, 0, 1], seed=0)
        with pytest.raises(InvalidLayerLadder):
            init_mlp([7, 8, 2], seed=0)


class TestForward:
    def test_zero_weights_give_half(self):
        mlp = init_mlp([3, 8, 1], seed=0)
        mlp.theta[...] = 0.0
        trace = forward(mlp, np.random.default_rng(0).normal(size=(5, 3)))
        np.testing.assert_array_equal(trace.y_hat, 0.5)

    def test_toy_net_hand_chain(self):
        # 1-1-1 net, weights 1, biases 0: x=-1 -> leaky gives -0.01 -> sigmoid
        mlp = init_mlp([1, 1, 1], alpha=0.01, seed=0)
        mlp.weights[0][...] = 1.0
        mlp.weights[1][...] = 1.0
        mlp.biases[0][...] = 0.0
        mlp.biases[1][...] = 0.0
        trace = forward(mlp, np.array([[-1.0]]))
        np.testing.assert_allclose(trace.activations[0][0, 0], -0.01, rtol=1e-12)
        np.testing.assert_allclose(trace.y_hat[0], 1 / (1 + math.exp(0.01)), rtol=1e-12)
        np.testing.assert_allclose(trace.y_hat[0], 0.4975, atol=5e-5)

    def test_batch_shape(self):
        mlp = init_mlp([7, 16, 8, 1], seed=2)
        trace = forward(mlp, np.zeros((8, 7)))
        assert trace.y_hat.shape == (8,)

    def test_shape_mismatch(self):
        mlp = init_mlp([7, 16, 8, 1], seed=2)
        with pytest.raises(ShapeMismatch):
            forward(mlp, np.zeros((4, 6)))

    def test_final_layer_linearity(self):
        # doubling the output layer weights and bias doubles its pre-activation
        mlp = init_mlp([5, 8, 1], seed=7)
        x = np.random.default_rng(1).normal(size=(6, 5))
        z1 = forward(mlp, x).pre_activations[-1]
        mlp.weights[-1][...] *= 2.0
        mlp.biases[-1][...] *= 2.0
        z2 = forward(mlp, x).pre_activations[-1]
        np.testing.assert_allclose(z2, 2.0 * z1, rtol=1e-12)

    def test_forward_probs_chunking_consistent(self):
        mlp = init_mlp([4, 16, 8, 1], seed=3)
        x = np.random.default_rng(2).normal(size=(100, 4))
        full = forward(mlp, x).y_hat
        chunked = forward_probs(mlp, x, chunk=17)
        np.testing.assert_array_equal(full, chunked)


class TestBceLoss:
    def test_half_prediction(self):
        np.testing.assert_allclose(
            bce_loss(np.array([0.5]), np.array([1.0])), math.log(2), rtol=1e-12
        )

    def test_near_perfect(self):
        loss = bce_loss(np.array([1.0 - 1e-7]), np.array([1.0]))
        assert loss == pytest.approx(1e-7, rel=1e-2)

    def test_clipping_bounds_loss(self):
        loss = bce_loss(np.array([0.0]), np.array([1.0]))
        np.testing.assert_allclose(loss, -math.log(1e-7), rtol=1e-9)

    def test_label_complement_symmetry(self):
        a = bce_loss(np.array([0.8]), np.array([1.0]))
        b = bce_loss(np.array([0.2]), np.array([0.0]))
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_batch_mean_linearity(self):
        pair = bce_loss(np.array([0.3, 0.9]), np.array([0.0, 1.0]))
        singles = (bce_loss(np.array([0.3]), np.array([0.0]))
                   + bce_loss(np.array([0.9]), np.array([1.0]))) / 2
        np.testing.assert_allclose(pair, singles, rtol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            bce_loss(np.array([0.5, 0.5]), np.array([1.0]))


def finite_difference_grads(mlp, x, y, h=1e-5):
    """Central-difference gradient of the mean BCE loss over all parameters."""
    grads = np.empty_like(mlp.theta)
    for i in range(mlp.theta.size):
        orig = mlp.theta[i]
        mlp.theta[i] = orig + h
        up = bce_loss(forward(mlp, x).y_hat, y)
        mlp.theta[i] = orig - h
        down = bce_loss(forward(mlp, x).y_hat, y)
        mlp.theta[i] = orig
        grads[i] = (up - down) / (2 * h)
    return grads


def max_relative_error(analytic, numeric):
    # vector-norm relative error; elementwise ratios on near-zero entries
    # would only measure float64 noise in the loss evaluations
    return float(
        np.linalg.norm(analytic - numeric)
        / (np.linalg.norm(analytic) + np.linalg.norm(numeric))
    )


class TestBackward:
    def test_zero_net_balanced_batch_output_bias_grad(self):
        mlp = init_mlp([2, 4, 1], seed=0)
        mlp.theta[...] = 0.0
        x = np.array([[1.0, -1.0], [-1.0, 1.0]])
        y = np.array([1.0, 0.0])
        grads = backward(mlp, forward(mlp, x), y)
        # y_hat = 0.5 for both rows; (0.5-1) + (0.5-0) = 0
        np.testing.assert_allclose(grads.biases[-1], 0.0, atol=1e-15)

    def test_single_sample_one_layer_hand_chain(self):
        # d_in=1 straight to sigmoid: dL/dW = (y_hat - y) * x
        mlp = init_mlp([1, 1], seed=0)
        mlp.weights[0][...] = 0.7
        mlp.biases[0][...] = 0.2
        x = np.array([[1.5]])
        y = np.array([1.0])
        y_hat = 1 / (1 + math.exp(-(0.7 * 1.5 + 0.2)))
        grads = backward(mlp, forward(mlp, x), y)
        np.testing.assert_allclose(grads.weights[0][0, 0], (y_hat - 1.0) * 1.5, rtol=1e-12)
        np.testing.assert_allclose(grads.biases[0][0], y_hat - 1.0, rtol=1e-12)

    def test_gradient_check_small_ladders(self):
        rng = np.random.default_rng(17)
        for trial in range(4):
            mlp = init_mlp([3, 6, 4, 1], seed=trial)
            x = rng.normal(size=(4, 3))
            y = rng.integers(0, 2, size=4).astype(float)
            analytic = backward(mlp, forward(mlp, x), y).theta
            numeric = finite_difference_grads(mlp, x, y)
            assert max_relative_error(analytic, numeric) < 1e-5

    def test_shape_mismatch(self):
        mlp = init_mlp([3, 4, 1], seed=0)
        trace = forward(mlp, np.zeros((2, 3)))
        with pytest.raises(ShapeMismatch):
            backward(mlp, trace, np.zeros(5))


class TestAmsgradStep:
    def one_param_setup(self):
        mlp = init_mlp([1, 1], seed=0)
        mlp.weights[0][...] = 1.0
        mlp.biases[0][...] = 0.0
        state = init_optimizer(mlp, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-7)
        grads = backward(mlp, forward(mlp, np.zeros((1, 1))), np.zeros(1))
        grads.theta[...] = [0.5, 0.0]
        return mlp, grads, state

    def test_hand_computed_single_step(self):
        mlp, grads, state = self.one_param_setup()
        amsgrad_step(mlp, grads, state)
        assert state.t == 1
        np.testing.assert_allclose(state.m[0], 0.05, rtol=1e-12)
        np.testing.assert_allclose(state.v[0], 2.5e-4, rtol=1e-12)
        np.testing.assert_allclose(state.v_hat[0], 2.5e-4, rtol=1e-12)
        np.testing.assert_allclose(mlp.weights[0][0, 0], 0.999000, atol=1e-6)

    def test_uncorrected_variant(self):
        mlp, grads, state = self.one_param_setup()
        state.bias_correction = False
        amsgrad_step(mlp, grads, state)
        # theta' = 1 - 0.001 * 0.05 / (sqrt(2.5e-4) + 1e-7)
        expected = 1.0 - 0.001 * 0.05 / (math.sqrt(2.5e-4) + 1e-7)
        np.testing.assert_allclose(mlp.weights[0][0, 0], expected, rtol=1e-12)

    def test_zero_gradient_is_noop(self):
        mlp, grads, state = self.one_param_setup()
        grads.theta[...] = 0.0
        before = mlp.theta.copy()
        amsgrad_step(mlp, grads, state)
        np.testing.assert_array_equal(mlp.theta, before)

    def test_vhat_monotone_under_sign_flips(self):
        mlp, grads, state = self.one_param_setup()
        grads.theta[...] = [0.5, 0.0]
        amsgrad_step(mlp, grads, state)
        vhat_1 = state.v_hat.copy()
        grads.theta[...] = [-0.5, 0.0]
        amsgrad_step(mlp, grads, state)
        assert np.all(state.v_hat >= vhat_1)

    def test_non_finite_gradient_rejected(self):
        mlp, grads, state = self.one_param_setup()
        grads.theta[0] = np.nan
        with pytest.raises(NonFiniteGradient):
            amsgrad_step(mlp, grads, state)

    def test_lr_zero_invariance(self):
        mlp = init_mlp([3, 5, 1], seed=4)
        state = init_optimizer(mlp, lr=0.0)
        before = mlp.theta.copy()
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = rng.normal(size=(4, 3))
            y = rng.integers(0, 2, 4).astype(float)
            grads = backward(mlp, forward(mlp, x), y)
            amsgrad_step(mlp, grads, state)
        np.testing.assert_array_equal(mlp.theta, before)


class TestSerialization:
    def roundtrip(self, mlp):
        text = save_model(mlp, feature_spec={"numeric": ["ht"]},
                          standardization={"mean": [0.0], "std": [1.0]})
        return load_model(text)

    def test_bit_exact_weights_and_outputs(self):
        mlp = init_mlp([4, 16, 8, 1], seed=13)
        again, feature_spec, standardization = self.roundtrip(mlp)
        assert np.array_equal(again.theta, mlp.theta)
        x = np.random.default_rng(5).normal(size=(10, 4))
        np.testing.assert_array_equal(forward(mlp, x).y_hat, forward(again, x).y_hat)
        assert feature_spec == {"numeric": ["ht"]}
        assert standardization == {"mean": [0.0], "std": [1.0]}

    def test_truncated_file_is_corrupt(self):
        mlp = init_mlp([4, 8, 1], seed=1)
        text = save_model(mlp)
        with pytest.raises(CorruptModel):
            load_model(text[: len(text) // 2])

    def test_wrong_schema_version(self):
        mlp = init_mlp([4, 8, 1], seed=1)
        doc = json.loads(save_model(mlp))
        doc["schema_version"] = 99
        with pytest.raises(SchemaMismatch):
            load_model(json.dumps(doc))

    def test_missing_weights_is_corrupt(self):
        mlp = init_mlp([4, 8, 1], seed=1)
        doc = json.loads(save_model(mlp))
        del doc["weights"]
        with pytest.raises(CorruptModel):
            load_model(json.dumps(doc))

    def test_wrong_weight_shape_is_corrupt(self):
        mlp = init_mlp([4, 8, 1], seed=1)
        doc = json.loads(save_model(mlp))
        doc["weights"][0] = [[1.0, 2.0]]
        with pytest.raises(CorruptModel):
            load_model(json.dumps(doc))

    def test_invalid_ladder_is_corrupt(self):
        mlp = init_mlp([4, 8, 1], seed=1)
        doc = json.loads(save_model(mlp))
        doc["layer_sizes"] = [4, 8, 2]
        with pytest.raises(CorruptModel):
            load_model(json.dumps(doc))

    def test_activation_names_recorded(self):
        mlp = init_mlp([7, 16, 8, 1], seed=0)
        doc = json.loads(save_model(mlp))
        assert doc["activations"] == ["leaky_relu", "relu", "sigmoid"]
