import numpy as np
import pytest

from app.core.errors import DimensionMismatchError, TrainingError
from app.core.neural import (
    DenseLayer,
    DenseNet,
    Gradients,
    TrainConfig,
    backward,
    forward,
    init_net,
    mse_train,
    sgd_step,
)
from app.core.rng import make_rng


def _single(weights, biases, activation) -> DenseNet:
    return DenseNet(layers=(DenseLayer(np.array(weights, float), np.array(biases, float), activation),))


def _numeric_grads(net: DenseNet, x: np.ndarray, upstream: np.ndarray, h: float = 1e-6):
    params = net.parameters()
    grads = []
    for t, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            plus = [q.copy() for q in params]
            minus = [q.copy() for q in params]
            plus[t][idx] += h
            minus[t][idx] -= h
            f_plus = np.sum(upstream * forward(net.with_parameters(plus), x))
            f_minus = np.sum(upstream * forward(net.with_parameters(minus), x))
            g[idx] = (f_plus - f_minus) / (2 * h)
        grads.append(g)
    return grads


def _flat(arrays) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in arrays])


def _rel_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-8))


class TestForward:
    def test_identity_layer(self):
        net = _single([[1.0, 2.0]], [0.5], "identity")
        assert forward(net, [1.0, 1.0]).tolist() == [3.5]

    def test_sigmoid_of_zero(self):
        net = init_net([3, 2], ["sigmoid"], seed=0)
        np.testing.assert_array_equal(forward(net, np.zeros(3)), [0.5, 0.5])

    def test_relu_clips(self):
        assert forward(_single([[-1.0]], [0.0], "relu"), [2.0]).tolist() == [0.0]

    def test_batch_and_row_agree(self):
        net = init_net([4, 5, 2], ["tanh", "identity"], seed=1)
        X = make_rng(1).normal(size=(6, 4))
        np.testing.assert_allclose(forward(net, X)[2], forward(net, X[2]), atol=1e-15)

    def test_width_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            forward(init_net([3, 1], ["identity"], seed=0), np.zeros(4))


class TestBackward:
    def test_identity_weight_gradient(self):
        net = _single([[0.3, -0.2]], [0.1], "identity")
        grads = backward(net, [2.0, 5.0], [1.5])
        np.testing.assert_allclose(grads.weights[0], [[3.0, 7.5]])
        np.testing.assert_allclose(grads.biases[0], [1.5])
        np.testing.assert_allclose(grads.inputs, [0.45, -0.3])

    def test_zero_upstream(self):
        net = init_net([3, 4, 2], ["tanh", "sigmoid"], seed=2)
        grads = backward(net, np.ones(3), np.zeros(2))
        assert all(not g.any() for g in grads.weights + grads.biases)

    def test_matches_finite_differences(self):
        for seed in range(100):
            rng = make_rng(seed)
            depth = int(rng.integers(1, 4))
            sizes = [int(s) for s in rng.integers(1, 9, size=depth + 1)]
            acts = [str(a) for a in rng.choice(["sigmoid", "tanh", "identity"], size=depth)]
            net = init_net(sizes, acts, seed=seed)
            net = net.with_parameters([p + 0.1 * rng.normal(size=p.shape) for p in net.parameters()])
            x = rng.normal(size=(3, sizes[0]))
            upstream = rng.normal(size=(3, sizes[-1]))
            analytic = backward(net, x, upstream)
            numeric = _numeric_grads(net, x, upstream)
            paired = [g for pair in zip(analytic.weights, analytic.biases) for g in pair]
            assert _rel_error(_flat(paired), _flat(numeric)) < 1e-4, seed

    def test_relu_matches_finite_differences_away_from_kinks(self):
        rng = make_rng(7)
        net = init_net([3, 4, 2], ["relu", "relu"], seed=7)
        net = net.with_parameters([np.abs(p) + 0.1 for p in net.parameters()])
        x = rng.uniform(0.5, 1.5, size=(4, 3))
        upstream = rng.normal(size=(4, 2))
        analytic = backward(net, x, upstream)
        paired = [g for pair in zip(analytic.weights, analytic.biases) for g in pair]
        assert _rel_error(_flat(paired), _flat(_numeric_grads(net, x, upstream))) < 1e-4


class TestSgd:
    def test_zero_rate_leaves_parameters(self):
        net = init_net([2, 2], ["identity"], seed=0)
        grads = backward(net, np.ones(2), np.ones(2))
        after = sgd_step(net, grads, 0.0)
        for a, b in zip(net.parameters(), after.parameters()):
            assert np.array_equal(a, b)

    def test_scalar_step(self):
        net = _single([[1.0]], [0.0], "identity")
        grads = Gradients(weights=(np.array([[0.5]]),), biases=(np.array([0.0]),), inputs=np.zeros(1))
        once = sgd_step(net, grads, 0.1)
        twice = sgd_step(once, grads, 0.1)
        assert once.layers[0].weights[0, 0] == pytest.approx(0.95)
        assert twice.layers[0].weights[0, 0] == pytest.approx(0.9)

    def test_non_finite_gradient(self):
        net = _single([[1.0]], [0.0], "identity")
        grads = Gradients(weights=(np.array([[np.nan]]),), biases=(np.array([0.0]),), inputs=np.zeros(1))
        with pytest.raises(TrainingError):
            sgd_step(net, grads, 0.1)


class TestTraining:
    def test_loss_decreases(self):
        rng = make_rng(3)
        X = rng.normal(size=(100, 3))
        Y = (X @ np.array([1.0, -2.0, 0.5]) + 0.3)[:, None]
        cfg = TrainConfig(epochs=50, batch_size=16, learning_rate=0.05, seed=1)
        _, history = mse_train(init_net([3, 1], ["identity"], seed=1), X, Y, cfg)
        assert history[-1] < history[0]
        assert history[-1] < 1e-3

    def test_deterministic(self):
        rng = make_rng(4)
        X, Y = rng.normal(size=(40, 2)), rng.normal(size=(40, 1))
        cfg = TrainConfig(epochs=5, batch_size=8, learning_rate=0.05, seed=2)
        a, _ = mse_train(init_net([2, 3, 1], ["tanh", "identity"], seed=5), X, Y, cfg)
        b, _ = mse_train(init_net([2, 3, 1], ["tanh", "identity"], seed=5), X, Y, cfg)
        for p, q in zip(a.parameters(), b.parameters()):
            assert np.array_equal(p, q)

    def test_epochs_must_be_positive(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
