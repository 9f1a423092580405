import numpy as np
import pytest

from errors import ModelError
from network import NeuralNetwork, fit_network, loss_gradient, n_weights, unpack


@pytest.fixture
def separable():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1.0, 1.0, (150, 3))
    y = (X[:, 0] - 0.5 * X[:, 1] > 0).astype(float)
    return X, y


# --- Tests for the loss ---


class TestLossGradient:
    @pytest.mark.parametrize("decay", [0.0, 0.1])
    def test_matches_central_differences(self, separable, decay):
        X, y = separable
        X, y = X[:20], y[:20]
        size = 3
        theta = np.random.default_rng(0).uniform(-0.5, 0.5, n_weights(3, size))
        _, grad = loss_gradient(theta, X, y, size, decay)
        eps = 1e-6
        numeric = np.empty_like(theta)
        for k in range(len(theta)):
            step = np.zeros_like(theta)
            step[k] = eps
            up, _ = loss_gradient(theta + step, X, y, size, decay)
            down, _ = loss_gradient(theta - step, X, y, size, decay)
            numeric[k] = (up - down) / (2 * eps)
        # per-coordinate relative error, floored where a component is near zero
        relative = np.abs(grad - numeric) / np.maximum(np.abs(numeric), 1e-3)
        assert relative.max() < 1e-5

    def test_empty_batch_is_pure_decay(self):
        theta = np.full(n_weights(2, 2), 0.5)
        loss, grad = loss_gradient(theta, np.empty((0, 2)), np.empty(0), 2, 0.1)
        assert loss == pytest.approx(0.1 * theta @ theta)
        np.testing.assert_allclose(grad, 0.2 * theta)

    def test_unpack_checks_length(self):
        with pytest.raises(ModelError, match="expected 9 weights"):
            unpack(np.zeros(8), 2, 2)


# --- Tests for fit_network ---


class TestFitNetwork:
    def test_learns_a_linear_boundary(self, separable):
        X, y = separable
        net = fit_network(X, y, size=3, decay=0.01, seed=1)
        assert np.mean((net.predict_scores(X) >= 0.5) == (y == 1)) > 0.9

    def test_learns_and_without_decay(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        y = np.array([0.0, 0.0, 0.0, 1.0])
        net = fit_network(X, y, size=2, decay=0.0, seed=3)
        np.testing.assert_array_equal(net.predict_scores(X) >= 0.5, y == 1)

    def test_converged_means_gradient_within_tolerance(self, separable):
        X, y = separable
        X, y = X[:60], y[:60]
        net = fit_network(X, y, size=2, decay=1.0, max_iter=2000, gtol=1e-5, seed=4)
        _, grad = loss_gradient(net.weights, X, y, 2, 1.0)
        assert net.converged
        assert np.abs(grad).max() <= 1e-5
        assert net.loss == pytest.approx(loss_gradient(net.weights, X, y, 2, 1.0)[0])

    def test_iteration_cap_is_not_convergence(self, separable):
        X, y = separable
        net = fit_network(X, y, size=3, decay=0.5, max_iter=2, seed=4)
        _, grad = loss_gradient(net.weights, X, y, 3, 0.5)
        assert net.iterations <= 2
        assert not net.converged
        assert np.abs(grad).max() > 1e-5

    def test_heavy_decay_flattens_predictions(self, separable):
        X, y = separable
        net = fit_network(X, y, size=2, decay=1e4, seed=1)
        np.testing.assert_allclose(net.predict_scores(X), 0.5, atol=0.05)

    def test_same_seed_same_weights(self, separable):
        X, y = separable
        a = fit_network(X, y, size=2, decay=0.1, max_iter=30, seed=5)
        b = fit_network(X, y, size=2, decay=0.1, max_iter=30, seed=5)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_describe_and_round_trip(self, separable):
        X, y = separable
        net = fit_network(X, y, size=2, decay=0.1, max_iter=30)
        lines = net.describe(["a", "b", "c"])
        assert lines[0] == "a 3-2-1 network with 11 weights"
        assert lines[-1].startswith("b->o ")
        again = NeuralNetwork.from_dict(net.to_dict())
        np.testing.assert_array_equal(again.predict_scores(X), net.predict_scores(X))

    @pytest.mark.parametrize("kwargs", [{"size": 0, "decay": 0.1}, {"size": 2, "decay": -1.0}])
    def test_invalid_parameters(self, separable, kwargs):
        X, y = separable
        with pytest.raises(ModelError):
            fit_network(X, y, **kwargs)
