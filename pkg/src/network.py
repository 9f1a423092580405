"""Single-hidden-layer logistic network with weight decay, fitted by L-BFGS."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from errors import FitError, ModelError

logger = logging.getLogger("network")

INIT_RANGE = 0.5


def n_weights(d: int, size: int) -> int:
    return d * size + size + size + 1


def unpack(theta: np.ndarray, d: int, size: int):
    """Split the flat parameter vector into (W1, b1, w2, b2)."""
    if len(theta) != n_weights(d, size):
        raise ModelError(f"expected {n_weights(d, size)} weights, got {len(theta)}")
    k = d * size
    W1 = theta[:k].reshape(d, size)
    b1 = theta[k : k + size]
    w2 = theta[k + size : k + 2 * size]
    b2 = theta[k + 2 * size]
    return W1, b1, w2, b2


def loss_gradient(
    theta: np.ndarray, X: np.ndarray, y: np.ndarray, size: int, decay: float
) -> tuple[float, np.ndarray]:
    """Summed cross-entropy plus decay * sum of squared weights, and its gradient.

    Biases are decayed like every other weight. An empty batch leaves only
    the decay term.
    """
    d = X.shape[1]
    W1, b1, w2, b2 = unpack(theta, d, size)
    H = expit(X @ W1 + b1)
    z = H @ w2 + b2
    loss = float(np.sum(np.logaddexp(0.0, z) - y * z)) + decay * float(theta @ theta)

    dz = expit(z) - y
    dH = np.outer(dz, w2) * H * (1.0 - H)
    grad = np.concatenate(
        [(X.T @ dH).ravel(), dH.sum(axis=0), H.T @ dz, [dz.sum()]]
    )
    return loss, grad + 2.0 * decay * theta


@dataclass(frozen=True, eq=False)
class NeuralNetwork:
    weights: np.ndarray
    n_inputs: int
    size: int
    decay: float
    loss: float
    iterations: int
    converged: bool

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        W1, b1, w2, b2 = unpack(self.weights, self.n_inputs, self.size)
        return expit(expit(X @ W1 + b1) @ w2 + b2)

    def describe(self, columns: list[str] | tuple[str, ...]) -> list[str]:
        """Architecture line followed by the incoming weights of each unit."""
        W1, b1, w2, b2 = unpack(self.weights, self.n_inputs, self.size)
        lines = [
            f"a {self.n_inputs}-{self.size}-1 network with {len(self.weights)} weights",
            f"inputs: {' '.join(columns)}",
            f"decay={self.decay:g} loss={self.loss:.4f} iterations={self.iterations}",
        ]
        for h in range(self.size):
            terms = [f"b->h{h + 1} {b1[h]:.4f}"]
            terms += [f"{name}->h{h + 1} {W1[i, h]:.4f}" for i, name in enumerate(columns)]
            lines.append("  ".join(terms))
        out = [f"b->o {b2:.4f}"] + [f"h{h + 1}->o {w2[h]:.4f}" for h in range(self.size)]
        lines.append("  ".join(out))
        return lines

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "n_inputs": self.n_inputs,
            "size": self.size,
            "decay": self.decay,
            "loss": self.loss,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NeuralNetwork":
        return cls(
            weights=np.asarray(data["weights"], dtype=np.float64),
            n_inputs=int(data["n_inputs"]),
            size=int(data["size"]),
            decay=float(data["decay"]),
            loss=float(data["loss"]),
            iterations=int(data["iterations"]),
            converged=bool(data["converged"]),
        )


def fit_network(
    X: np.ndarray,
    y: np.ndarray,
    *,
    size: int,
    decay: float,
    max_iter: int = 500,
    gtol: float = 1e-5,
    seed: int = 0,
) -> NeuralNetwork:
    """Start from uniform weights in [-0.5, 0.5] and run L-BFGS-B.

    The fit stops once every gradient component is within ``gtol`` or after
    ``max_iter`` iterations; ``converged`` records which of the two happened.
    """
    if size < 1:
        raise ModelError(f"hidden size must be >= 1, got {size}")
    if decay < 0:
        raise ModelError(f"decay must be >= 0, got {decay}")
    y = np.asarray(y, dtype=np.float64)
    d = X.shape[1]
    rng = np.random.default_rng(seed)
    theta0 = rng.uniform(-INIT_RANGE, INIT_RANGE, n_weights(d, size))

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        loss, grad = loss_gradient(theta, X, y, size, decay)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise FitError(f"network loss became non-finite (size={size}, decay={decay})")
        return loss, grad

    # ftol=0 leaves the gradient test and the iteration cap as the only stops
    result = minimize(
        objective,
        theta0,
        jac=True,
        method="L-BFGS-B",
        options={
            "maxiter": max_iter,
            "maxfun": max(15000, 20 * max_iter),
            "ftol": 0.0,
            "gtol": gtol,
        },
    )
    weights = np.asarray(result.x)
    loss, grad = loss_gradient(weights, X, y, size, decay)
    grad_norm = float(np.abs(grad).max()) if grad.size else 0.0
    converged = grad_norm <= gtol
    if not converged:
        logger.debug(
            f"L-BFGS stopped at |grad|={grad_norm:.3g} after {result.nit} iterations "
            f"(size={size}, decay={decay}): {result.message}"
        )
    return NeuralNetwork(
        weights=weights,
        n_inputs=d,
        size=size,
        decay=decay,
        loss=loss,
        iterations=int(result.nit),
        converged=converged,
    )
