"""Soft-margin RBF support vector machine trained by SMO.

Working pairs follow the second-order selection rule; kernel rows are kept in
a bounded LRU cache so memory stays flat on large training sets.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from errors import ConvergenceError, FitError, ModelError

logger = logging.getLogger("svm")

TAU = 1e-12


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a - b||^2) for every pair of rows."""
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


class KernelCache:
    """LRU cache of kernel rows K(x_i, X) bounded by a memory budget."""

    def __init__(self, X: np.ndarray, gamma: float, cache_mb: float):
        self.X = X
        self.gamma = gamma
        self.sq_norms = np.sum(X * X, axis=1)
        row_bytes = 8 * len(X)
        self.capacity = max(2, int(cache_mb * 2**20) // row_bytes)
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def row(self, i: int) -> np.ndarray:
        cached = self._rows.get(i)
        if cached is not None:
            self._rows.move_to_end(i)
            self.hits += 1
            return cached
        self.misses += 1
        sq = self.sq_norms[i] + self.sq_norms - 2.0 * (self.X @ self.X[i])
        row = np.exp(-self.gamma * np.maximum(sq, 0.0))
        self._rows[i] = row
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return row

    def __len__(self) -> int:
        return len(self._rows)


@dataclass(frozen=True, eq=False)
class SupportVectorMachine:
    """Decision value sum_t coef_t K(sv_t, x) - rho; score is its logistic."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_t * y_t
    rho: float
    gamma: float
    C: float
    iterations: int

    @property
    def n_support(self) -> int:
        return len(self.dual_coef)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        # chunked so the kernel block stays small for large queries
        for start in range(0, len(X), 2048):
            block = rbf_kernel(X[start : start + 2048], self.support_vectors, self.gamma)
            out[start : start + 2048] = block @ self.dual_coef - self.rho
        return out

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))

    def objectives(self, X: np.ndarray, y: np.ndarray) -> tuple[float, float]:
        """(primal, dual) objective values on the training set the model came from.

        Builds the full kernel matrix; meant for small sets.
        """
        signs = np.where(np.asarray(y) == 1, 1.0, -1.0)
        K_sv = rbf_kernel(self.support_vectors, self.support_vectors, self.gamma)
        quad = float(self.dual_coef @ K_sv @ self.dual_coef)
        dual = float(np.sum(np.abs(self.dual_coef))) - 0.5 * quad
        margins = signs * self.decision_function(X)
        primal = 0.5 * quad + self.C * float(np.sum(np.maximum(0.0, 1.0 - margins)))
        return primal, dual

    def to_dict(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "rho": self.rho,
            "gamma": self.gamma,
            "C": self.C,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SupportVectorMachine":
        return cls(
            support_vectors=np.asarray(data["support_vectors"], dtype=np.float64),
            dual_coef=np.asarray(data["dual_coef"], dtype=np.float64),
            rho=float(data["rho"]),
            gamma=float(data["gamma"]),
            C=float(data["C"]),
            iterations=int(data["iterations"]),
        )


def _select_working_set(
    alpha: np.ndarray,
    G: np.ndarray,
    signs: np.ndarray,
    C: float,
    cache: KernelCache,
) -> tuple[int, int, float]:
    """Second-order working pair (i, j) and the current KKT gap."""
    minus_yg = -signs * G
    up = ((signs > 0) & (alpha < C)) | ((signs < 0) & (alpha > 0))
    low = ((signs < 0) & (alpha < C)) | ((signs > 0) & (alpha > 0))
    if not up.any() or not low.any():
        return -1, -1, 0.0

    masked_up = np.where(up, minus_yg, -np.inf)
    i = int(np.argmax(masked_up))
    g_max = masked_up[i]
    g_min = float(np.min(minus_yg[low]))
    gap = g_max - g_min

    K_i = cache.row(i)
    b = g_max - minus_yg
    candidates = low & (b > 0)
    if not candidates.any():
        return i, -1, gap
    # RBF kernel has K_tt == 1
    a = np.maximum(2.0 - 2.0 * K_i, TAU)
    gain = np.where(candidates, -(b * b) / a, np.inf)
    j = int(np.argmin(gain))
    return i, j, gap


def _update_pair(
    alpha: np.ndarray, G: np.ndarray, signs: np.ndarray, C: float, i: int, j: int, K_ij: float
) -> tuple[float, float]:
    """Analytic two-variable step, clipped to the box; returns the alpha deltas."""
    old_i, old_j = alpha[i], alpha[j]
    if signs[i] != signs[j]:
        quad = max(2.0 - 2.0 * K_ij, TAU)
        delta = (-G[i] - G[j]) / quad
        diff = alpha[i] - alpha[j]
        alpha[i] += delta
        alpha[j] += delta
        if diff > 0:
            if alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = diff
        elif alpha[i] < 0:
            alpha[i] = 0.0
            alpha[j] = -diff
        if diff > 0:
            if alpha[i] > C:
                alpha[i] = C
                alpha[j] = C - diff
        elif alpha[j] > C:
            alpha[j] = C
            alpha[i] = C + diff
    else:
        quad = max(2.0 - 2.0 * K_ij, TAU)
        delta = (G[i] - G[j]) / quad
        total = alpha[i] + alpha[j]
        alpha[i] -= delta
        alpha[j] += delta
        if total > C:
            if alpha[i] > C:
                alpha[i] = C
                alpha[j] = total - C
        elif alpha[j] < 0:
            alpha[j] = 0.0
            alpha[i] = total
        if total > C:
            if alpha[j] > C:
                alpha[j] = C
                alpha[i] = total - C
        elif alpha[i] < 0:
            alpha[i] = 0.0
            alpha[j] = total
    return alpha[i] - old_i, alpha[j] - old_j


def _compute_rho(alpha: np.ndarray, G: np.ndarray, signs: np.ndarray, C: float) -> float:
    yG = signs * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(np.mean(yG[free]))
    upper = ((signs > 0) & (alpha >= C)) | ((signs < 0) & (alpha <= 0))
    lower = ((signs > 0) & (alpha <= 0)) | ((signs < 0) & (alpha >= C))
    ub = float(np.min(yG[lower])) if lower.any() else np.inf
    lb = float(np.max(yG[upper])) if upper.any() else -np.inf
    return (ub + lb) / 2.0


def fit_svm(
    X: np.ndarray,
    y: np.ndarray,
    *,
    C: float = 1.0,
    gamma: float | None = None,
    tol: float = 1e-3,
    max_iter: int | None = None,
    cache_mb: float = 256,
) -> SupportVectorMachine:
    """Solve the C-SVC dual with SMO.

    ``y`` is 1 for Left and 0 for Stayed. ``gamma`` defaults to 1 / feature
    count. Stops when the maximal KKT violation falls below ``tol``; reaching
    ``max_iter`` (default max(100000, 100 n)) raises ConvergenceError.
    """
    n, d = X.shape
    if C <= 0:
        raise ModelError(f"C must be positive, got {C}")
    if tol <= 0:
        raise ModelError(f"tol must be positive, got {tol}")
    gamma = 1.0 / d if gamma is None else gamma
    if gamma <= 0:
        raise ModelError(f"gamma must be positive, got {gamma}")
    signs = np.where(np.asarray(y) == 1, 1.0, -1.0)
    if np.all(signs > 0) or np.all(signs < 0):
        raise FitError("SVM needs both classes in the training data")
    if max_iter is None:
        max_iter = max(100_000, 100 * n)

    cache = KernelCache(np.ascontiguousarray(X, dtype=np.float64), gamma, cache_mb)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 0.5 a'Qa - e'a at a = 0

    iterations = 0
    while True:
        i, j, gap = _select_working_set(alpha, G, signs, C, cache)
        if j < 0 or gap < tol:
            break
        if iterations >= max_iter:
            raise ConvergenceError(f"SMO hit its cap of {max_iter} iterations", gap)
        K_i = cache.row(i)
        K_j = cache.row(j)
        d_i, d_j = _update_pair(alpha, G, signs, C, i, j, K_i[j])
        G += signs * (signs[i] * d_i * K_i + signs[j] * d_j * K_j)
        iterations += 1

    rho = _compute_rho(alpha, G, signs, C)
    support = np.flatnonzero(alpha > 0)
    logger.debug(
        f"SMO converged in {iterations} iterations: {support.size} support vectors,"
        f" cache {cache.hits} hits / {cache.misses} misses"
    )
    return SupportVectorMachine(
        support_vectors=X[support].copy(),
        dual_coef=alpha[support] * signs[support],
        rho=rho,
        gamma=gamma,
        C=C,
        iterations=iterations,
    )
