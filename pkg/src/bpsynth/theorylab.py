"""Small numerical experiments on why synthesis beats linear pooling.

* A toy drift model where the best linear pool leaves a bias that an
  intercept removes, and a martingale case where it does not.
* KL risk of one-step predictors under shifts of the true parameters,
  comparing a random-walk state predictor with a stationary one.
* Convergence of proper-prior predictive densities to the flat-prior one.

The state-space predictors here have known observation and evolution
variances, so predictive densities are exact Gaussians.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.integrate import simpson

from .statdist import RandomStream


@dataclass(frozen=True)
class ToyModelConfig:
    """dy = mu dt + dxi1 + dxi2 + dxi3 and dx_j = mu_j dt + dxi_j, with
    independent Gaussian increments of variance ``step``."""

    mu: float = 0.5
    mu1: float = 0.0
    mu2: float = 0.0
    step: float = 1.0
    n_samples: int = 1_000_000

    def __post_init__(self):
        if self.n_samples < 1000:
            raise ValueError("n_samples must be at least 1000")
        if not self.step > 0:
            raise ValueError("step must be positive")


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    std_error: float
    n_paths: int

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError("std_error must be non-negative")


def optimal_linear_weights(dy, dx, max_cond: float = 1e12) -> np.ndarray:
    """Solve the empirical normal equations E[dx dx'] w = E[dx dy].

    No intercept and no simplex constraint.
    """
    dy = np.asarray(dy, dtype=float)
    dx = np.asarray(dx, dtype=float)
    if dx.ndim == 1:
        dx = dx[:, None]
    if dx.shape[0] != dy.size:
        raise ValueError("dy and dx have different sample counts")
    M = dx.T @ dx / dy.size
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond >= max_cond:
        raise np.linalg.LinAlgError(
            f"second-moment matrix of dx is singular or ill-conditioned (condition number {cond:.3g})"
        )
    return np.linalg.solve(M, dx.T @ dy / dy.size)


def simulate_toy(cfg: ToyModelConfig, stream: RandomStream):
    g = stream.generator
    n, dt = cfg.n_samples, cfg.step
    xi = np.sqrt(dt) * g.standard_normal((n, 3))
    dy = cfg.mu * dt + xi.sum(axis=1)
    dx = np.column_stack([cfg.mu1 * dt + xi[:, 0], cfg.mu2 * dt + xi[:, 1]])
    return dy, dx


@dataclass(frozen=True)
class GapResult:
    mse_linear: float
    mse_with_intercept: float
    gap: float
    gap_se: float
    mu_star: float
    mu_star_se: float
    weights: np.ndarray


def theorem2_gap(cfg: ToyModelConfig, stream: RandomStream) -> GapResult:
    """MSE of the best linear pool with and without its mean residual added.

    The gap equals mu_star**2; its standard error is that of the per-sample
    loss differences.
    """
    dy, dx = simulate_toy(cfg, stream)
    w = optimal_linear_weights(dy, dx)
    r = dy - dx @ w
    mu_star = r.mean()
    l_lin = r * r
    l_int = (r - mu_star) ** 2
    diff = l_lin - l_int
    n = r.size
    return GapResult(
        float(l_lin.mean()), float(l_int.mean()), float(diff.mean()),
        float(diff.std(ddof=1) / np.sqrt(n)), float(mu_star), float(r.std(ddof=1) / np.sqrt(n)), w,
    )


# ---------------------------------------------------------------------------
# Known-variance state-space predictors


@dataclass(frozen=True)
class StatePredictor:
    """One-step predictor for y_t = F_t' theta_t + eps_t, eps ~ N(0, V),
    theta_t = phi theta_{t-1} + omega_t, omega ~ N(0, W I), F_t = (1, x_t).

    ``prior_var=None`` gives the flat-prior limit, computed exactly by
    generalised least squares on the initial state; otherwise the prior
    is theta_0 ~ N(0, prior_var I).
    """

    W: float = 0.01
    V: float = 1.0
    phi: float = 1.0
    prior_var: float | None = None

    def predictive(self, y, X, x_next):
        """Predictive N(mean, var) for y_{T+1} given y_{1:T}, regressors
        X (T x J) and the next regressor ``x_next``."""
        y = np.asarray(y, dtype=float)
        X = np.asarray(X, dtype=float).reshape(y.size, np.size(x_next))
        Fall = np.column_stack([np.ones(y.size + 1), np.vstack([X, np.ravel(x_next)])])
        T1, p = Fall.shape
        # theta_t = phi^t theta_0 + sum_{s<=t} phi^(t-s) omega_s
        t = np.arange(1, T1 + 1)
        H = Fall * (self.phi ** t)[:, None]
        lag = np.abs(t[:, None] - t[None, :])
        lo = np.minimum(t[:, None], t[None, :])
        if self.phi == 1.0:
            K = lo.astype(float)
        else:
            p2 = self.phi ** 2
            K = self.phi ** lag * (1.0 - p2 ** lo) / (1.0 - p2)
        S = self.W * K * (Fall @ Fall.T) + self.V * np.eye(T1)
        if self.prior_var is not None:
            S = S + self.prior_var * H @ H.T
            return _condition_last(S, y, np.zeros(T1))
        if y.size < p:
            raise ValueError("flat prior needs at least as many observations as states")
        return _gls_last(S, H, y)

    def density(self, y, X, x_next):
        m, v = self.predictive(y, X, x_next)
        return stats.norm(m, np.sqrt(v))


def _condition_last(S, y, mean):
    T = y.size
    Soo, Som, Smm = S[:T, :T], S[:T, T], S[T, T]
    if T == 0:
        return float(mean[T]), float(Smm)
    c = np.linalg.cholesky(Soo)
    a = np.linalg.solve(c, y - mean[:T])
    b = np.linalg.solve(c, Som)
    return float(mean[T] + b @ a), float(Smm - b @ b)


def _gls_last(S, H, y):
    # flat prior on theta_0: universal-kriging predictor and variance
    T = y.size
    Soo, Som, Smm = S[:T, :T], S[:T, T], S[T, T]
    Ho, hm = H[:T], H[T]
    Si_H = np.linalg.solve(Soo, Ho)
    Si_y = np.linalg.solve(Soo, y)
    Si_s = np.linalg.solve(Soo, Som)
    G = Ho.T @ Si_H
    beta = np.linalg.solve(G, Ho.T @ Si_y)
    u = hm - Ho.T @ Si_s
    mean = hm @ beta + Si_s @ (y - Ho @ beta)
    var = Smm - Som @ Si_s + u @ np.linalg.solve(G, u)
    return float(mean), float(var)


def kalman_predictive(y, X, x_next, W, V, prior_var, phi=1.0):
    """Same proper-prior predictive as :class:`StatePredictor`, by running
    the filter forward.

    The filter carries the precision P = C^-1 and b = P m so that very
    diffuse priors do not lose precision to cancellation.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(y.size, np.size(x_next))
    p = X.shape[1] + 1
    eye = np.eye(p)
    P = eye / prior_var
    b = np.zeros(p)
    for t in range(y.size + 1):
        # evolve: R = phi^2 C + W I, written without inverting P
        M = P / (phi * phi)
        K = np.linalg.solve(M + eye / W, np.column_stack([M, b / phi])) / W
        P, b = 0.5 * (K[:, :p] + K[:, :p].T), K[:, p]
        F = np.r_[1.0, X[t] if t < y.size else np.ravel(x_next)]
        if t == y.size:
            RF = np.linalg.solve(P, F)
            return float(RF @ b), float(F @ RF + V)
        P = P + np.outer(F, F) / V
        b = b + F * y[t] / V


# ---------------------------------------------------------------------------
# KL risk


def kl_quadrature(truth, predictor, n_points: int = 2001, width: float = 8.0,
                  tail_tol: float = 1e-8, max_widen: int = 4) -> float:
    """KL(truth || predictor) for two frozen 1-d scipy distributions."""
    loc, sd = float(truth.mean()), float(truth.std())
    for _ in range(max_widen + 1):
        lo, hi = loc - width * sd, loc + width * sd
        tail = truth.cdf(lo) + truth.sf(hi)
        if tail <= tail_tol:
            z = np.linspace(lo, hi, n_points)
            lp = truth.logpdf(z)
            integrand = np.exp(lp) * (lp - predictor.logpdf(z))
            return float(simpson(integrand, x=z))
        width *= 2.0
    raise ArithmeticError(f"quadrature grid misses tail mass {tail:.3g} after widening")


def simulate_regression_path(a, theta, T, V, g, J=None):
    """y_t = a + theta . x_t + eps_t with x_t ~ N(0, I)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    X = g.standard_normal((T + 1, theta.size))
    eps = np.sqrt(V) * g.standard_normal(T)
    y = a + X[:T] @ theta + eps
    return y, X[:T], X[T]


def kl_risk_paths(true_params, predictor: StatePredictor, n_paths: int, stream: RandomStream,
                  T: int = 20, V: float | None = None) -> np.ndarray:
    """Per-path KL between the true one-step density and the predictor's."""
    a, theta = true_params
    V = predictor.V if V is None else V
    out = np.empty(n_paths)
    for k in range(n_paths):
        g = stream.child(k).generator
        y, X, x_next = simulate_regression_path(a, theta, T, V, g)
        truth = stats.norm(a + x_next @ np.atleast_1d(theta), np.sqrt(V))
        out[k] = kl_quadrature(truth, predictor.density(y, X, x_next))
    return out


def kl_risk_mc(true_params, predictor: StatePredictor, n_paths: int, stream: RandomStream,
               T: int = 20) -> RiskEstimate:
    """Monte Carlo KL risk of ``predictor`` when data follow
    y_t = a + theta . x_t + eps_t with constant (a, theta).

    Path k uses stream ``stream.child(k)``, so two calls with the same
    stream share random numbers.
    """
    kl = kl_risk_paths(true_params, predictor, n_paths, stream, T)
    return RiskEstimate(float(kl.mean()), float(kl.std(ddof=1) / np.sqrt(n_paths)), n_paths)


@dataclass(frozen=True)
class ConstancyResult:
    risks: list
    max_z: float
    constant: bool


def lemma2_constancy(shifts, predictor: StatePredictor, n_paths: int, stream: RandomStream,
                     T: int = 20, z_crit: float = 3.0) -> ConstancyResult:
    """Risk at each shift with common random numbers, and whether all pairs
    agree within ``z_crit`` pooled standard errors."""
    risks = [kl_risk_mc(s, predictor, n_paths, stream, T) for s in shifts]
    max_z = 0.0
    for i in range(len(risks)):
        for j in range(i + 1, len(risks)):
            se = np.hypot(risks[i].std_error, risks[j].std_error)
            d = abs(risks[i].value - risks[j].value)
            max_z = max(max_z, np.inf if se == 0 and d > 0 else (0.0 if d == 0 else d / se))
    return ConstancyResult(risks, float(max_z), bool(max_z < z_crit))


# ---------------------------------------------------------------------------
# Flat-prior convergence


def corollary2_convergence(sigmas, y, X, x_next, grid, W: float = 0.01, V: float = 1.0) -> np.ndarray:
    """Sup over ``grid`` of |q_sigma - q_flat| for each prior scale sigma.

    q_sigma is the Kalman-filter predictive density under theta_0 ~
    N(0, sigma^2 I); q_flat is the exact flat-prior limit. With no data the
    flat-prior density is identically zero.
    """
    y = np.asarray(y, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if y.size == 0:
        flat = np.zeros_like(grid)
    else:
        fm, fv = StatePredictor(W, V).predictive(y, X, x_next)
        flat = stats.norm.pdf(grid, fm, np.sqrt(fv))
    out = np.empty(len(sigmas))
    for i, s in enumerate(sigmas):
        m, v = kalman_predictive(y, X, x_next, W, V, float(s) ** 2)
        out[i] = np.max(np.abs(stats.norm.pdf(grid, m, np.sqrt(v)) - flat))
    return out


def fixed_path(T: int, stream: RandomStream, a=0.3, theta=(0.8, -0.5), V: float = 1.0):
    return simulate_regression_path(a, theta, T, V, stream.generator)


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in r])
