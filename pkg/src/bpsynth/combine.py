"""Linear pooling baselines: equal weights, sequential BMA, Mallows averaging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


def _check_simplex(w: np.ndarray) -> np.ndarray:
    if np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-12:
        raise AssertionError(f"weights left the unit simplex: {w}")
    return w


@dataclass(frozen=True)
class WeightVector:
    """Pooling weights on the unit simplex."""

    w: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if w.ndim != 1 or np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must lie on the unit simplex, got {w}")
        object.__setattr__(self, "w", w)

    def __array__(self, dtype=None, copy=None):
        return self.w if dtype is None else self.w.astype(dtype)

    def __len__(self):
        return self.w.size


def equal_weights(J: int) -> np.ndarray:
    if J < 1:
        raise ValueError("need at least one agent")
    return np.full(J, 1.0 / J)


@dataclass(frozen=True)
class BmaScoreState:
    """Cumulative log predictive score of each agent."""

    scores: np.ndarray

    @classmethod
    def initial(cls, J: int) -> "BmaScoreState":
        return cls(np.zeros(J))

    def weights(self) -> np.ndarray:
        w = np.exp(self.scores - logsumexp(self.scores))
        w /= w.sum()
        return w


def bma_update(state: BmaScoreState, log_pred_density) -> tuple[BmaScoreState, np.ndarray]:
    lpd = np.asarray(log_pred_density, dtype=float)
    if lpd.shape != state.scores.shape:
        raise ValueError(f"expected {state.scores.size} log densities, got {lpd.size}")
    if not np.all(np.isfinite(lpd)):
        raise ValueError("log predictive densities must be finite")
    new = BmaScoreState(state.scores + lpd)
    return new, new.weights()


def mallows_criterion(w, point_forecasts, realized, k, sigma2_hat) -> float:
    w = np.asarray(w, dtype=float)
    resid = np.asarray(realized) - np.asarray(point_forecasts) @ w
    return float(resid @ resid + 2.0 * sigma2_hat * np.dot(w, k))


def mallows_weights(point_forecasts, realized, k, sigma2_hat: float, tol: float = 1e-10) -> np.ndarray:
    """Minimise the Mallows criterion over the unit simplex.

    ``point_forecasts`` is (n, J): one column of past point forecasts per
    agent, aligned with ``realized``. ``k`` holds each agent's effective
    parameter count.
    """
    Y = np.atleast_2d(np.asarray(point_forecasts, dtype=float))
    y = np.asarray(realized, dtype=float)
    if y.size == 0:
        raise ValueError("Mallows weights need a non-empty window")
    if Y.shape[0] != y.size:
        raise ValueError("forecast and realised series are not aligned")
    J = Y.shape[1]
    k = np.broadcast_to(np.asarray(k, dtype=float), (J,))
    if J == 1:
        return np.ones(1)
    if J == 2:
        return _mallows_pair(Y, y, k, sigma2_hat)
    return _mallows_smo(Y, y, k, sigma2_hat, tol)


def _mallows_pair(Y, y, k, sigma2_hat):
    d = Y[:, 0] - Y[:, 1]
    r = y - Y[:, 1]
    dd = d @ d
    lin = r @ d - sigma2_hat * (k[0] - k[1])
    if dd <= 1e-300:
        # criterion is linear (or flat) in w1
        w1 = 0.5 if lin == 0 else float(lin > 0)
    else:
        w1 = float(np.clip(lin / dd, 0.0, 1.0))
    return _check_simplex(np.array([w1, 1.0 - w1]))


def _mallows_smo(Y, y, k, sigma2_hat, tol, max_iter=100_000):
    # C(w) = w'Aw - 2 b'w + const; pairwise mass exchange until the KKT gap closes.
    A = Y.T @ Y
    b = Y.T @ y - sigma2_hat * k
    J = A.shape[0]
    w = np.full(J, 1.0 / J)
    scale = 1.0 + np.abs(A).max() + np.abs(b).max()
    for _ in range(max_iter):
        grad = 2.0 * (A @ w - b)
        i = int(np.argmin(grad))
        active = np.flatnonzero(w > 0)
        j = int(active[np.argmax(grad[active])])
        if grad[j] - grad[i] <= tol * scale or i == j:
            break
        curv = 2.0 * (A[i, i] + A[j, j] - 2.0 * A[i, j])
        step = w[j] if curv <= 0 else min(w[j], (grad[j] - grad[i]) / curv)
        w[i] += step
        w[j] -= step
    w = np.clip(w, 0.0, None)
    return _check_simplex(w / w.sum())


def pool_point(w, means) -> float:
    w = np.asarray(w, dtype=float)
    means = np.asarray(means, dtype=float)
    if w.shape != means.shape:
        raise ValueError(f"{w.size} weights for {means.size} forecasts")
    return float(w @ means)
