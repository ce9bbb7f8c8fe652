"""Bayesian predictive synthesis with a random-walk DLM synthesis function.

The synthesis model is

    y_t = theta0_t + theta_t . x_t + eps_t,   eps_t ~ N(0, v_t)
    x_t ~ prod_j h_j(x_{jt})                  (agents' Student-t forecasts)
    (theta0_t, theta_t) random walk with discount delta, v_t beta-discounted,

and is fitted by a three-block Gibbs sampler (FFBS for the coefficients and
volatilities, Student-t mixing weights, then the latent agent values).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import _kernels
from .dlm import Discounts, NigState, evolve_forecast, update
from .statdist import RandomStream

BLOCK = 250


@dataclass(frozen=True)
class ForecastPanel:
    """Agents' Student-t forecasts, one row per time point: locations ``f``,
    variance-like scales ``q`` and degrees of freedom ``dof``, each T x J."""

    f: np.ndarray
    q: np.ndarray
    dof: np.ndarray

    def __post_init__(self):
        arrs = [np.atleast_2d(np.asarray(a, dtype=float)) for a in (self.f, self.q, self.dof)]
        if not arrs[0].shape == arrs[1].shape == arrs[2].shape:
            raise ValueError("panel components must share one T x J shape")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise ValueError("forecast panel contains non-finite entries")
        if np.any(arrs[1] <= 0) or np.any(arrs[2] <= 0):
            raise ValueError("forecast scales and dofs must be positive")
        for name, a in zip(("f", "q", "dof"), arrs):
            object.__setattr__(self, name, np.ascontiguousarray(a))

    @property
    def shape(self):
        return self.f.shape

    def __len__(self):
        return self.f.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1)
        return ForecastPanel(self.f[idx], self.q[idx], self.dof[idx])

    @classmethod
    def from_histories(cls, histories) -> "ForecastPanel":
        return cls(
            np.column_stack([h.f for h in histories]),
            np.column_stack([h.q for h in histories]),
            np.column_stack([h.dof for h in histories]),
        )


@dataclass
class BpsConfig:
    m0: np.ndarray | None = None
    s0: float = 0.002
    n0: float = 10.0
    discounts: Discounts = field(default_factory=lambda: Discounts(delta=0.95, beta=0.99))
    burn_in: int = 2000
    kept_draws: int = 3000
    warm_start_burn: int = 500
    prior_scale: float = 1.0

    def __post_init__(self):
        if not self.s0 > 0 or not self.n0 > 0 or not self.prior_scale > 0:
            raise ValueError("s0, n0 and prior_scale must be positive")
        if self.burn_in < 0 or self.warm_start_burn < 0 or self.kept_draws < 1:
            raise ValueError("burn-in counts must be >= 0 and kept_draws >= 1")

    def prior(self, J: int) -> NigState:
        m0 = np.r_[0.0, np.full(J, 1.0 / J)] if self.m0 is None else np.asarray(self.m0, float)
        if m0.shape != (J + 1,):
            raise ValueError(f"m0 must have length J + 1 = {J + 1}")
        return NigState(m0, self.prior_scale * np.eye(J + 1), self.n0, self.s0)


@dataclass
class SynthesisDraws:
    """Kept posterior draws. ``theta`` is K x (T+1) x (J+1) with column 0 the
    intercept and time index 0 the prior point; ``v`` is K x (T+1) (index 0
    is the prior-time volatility); ``x`` is K x T x J. ``term_*`` hold each
    draw's terminal filter summary, used to evolve one step ahead."""

    theta: np.ndarray
    v: np.ndarray
    x: np.ndarray
    term_m: np.ndarray
    term_C: np.ndarray
    term_n: np.ndarray
    term_s: np.ndarray
    discounts: Discounts
    last_x: np.ndarray | None = None

    def __len__(self):
        return self.theta.shape[0]

    @property
    def intercept(self) -> np.ndarray:
        return self.theta[:, :, 0]

    @property
    def coefficients(self) -> np.ndarray:
        return self.theta[:, :, 1:]

    def posterior_mean(self) -> np.ndarray:
        """Posterior mean of theta'_t for t = 1..T."""
        return self.theta[:, 1:, :].mean(axis=0)


def _shapes(cfg: BpsConfig, T: int):
    beta = cfg.discounts.beta
    n = np.empty(T + 1)
    n[0] = cfg.n0
    for t in range(T):
        n[t + 1] = beta * n[t] + 1.0
    return n


@dataclass(frozen=True)
class PriorDraw:
    """One joint draw of data and states from the synthesis model."""

    y: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    v: np.ndarray


def simulate_from_prior(h: ForecastPanel, cfg: BpsConfig, stream: RandomStream) -> PriorDraw:
    """Draw (theta, v, x, y) from the prior synthesis model the sampler
    targets, for calibration checks.

    The evolution variance and volatility shocks at time t use the filter
    summaries of the data generated so far, which is what the discount
    model conditions on. ``theta`` and ``v`` carry the prior point at
    index 0.
    """
    g = stream.generator
    T, J = h.shape
    d = cfg.discounts
    st = cfg.prior(J)
    phi = g.gamma(st.n / 2, 2.0 / (st.n * st.s))
    theta = st.m + np.linalg.cholesky(st.C / (st.s * phi)) @ g.standard_normal(J + 1)
    thetas = np.empty((T + 1, J + 1))
    v = np.empty(T + 1)
    thetas[0], v[0] = theta, 1.0 / phi
    x = np.empty((T, J))
    y = np.empty(T)
    for t in range(T):
        if d.beta < 1.0:
            phi = phi * g.beta(d.beta * st.n / 2, (1 - d.beta) * st.n / 2) / d.beta
        if d.delta < 1.0:
            W = st.C * (1 - d.delta) / d.delta
            theta = theta + np.linalg.cholesky(W / (st.s * phi)) @ g.standard_normal(J + 1)
        x[t] = h.f[t] + np.sqrt(h.q[t]) * g.standard_t(h.dof[t])
        F = np.r_[1.0, x[t]]
        y[t] = F @ theta + g.standard_normal() / np.sqrt(phi)
        thetas[t + 1], v[t + 1] = theta, 1.0 / phi
        prior, fc = evolve_forecast(st, F, d)
        st = update(prior, fc, F, y[t])
    return PriorDraw(y, x, thetas, v)


def gibbs_run(
    y,
    h: ForecastPanel,
    cfg: BpsConfig,
    stream: RandomStream,
    x_init=None,
    burn: int | None = None,
) -> SynthesisDraws:
    """Run the BPS Gibbs sampler on ``y`` (length T) and panel ``h`` (T x J)."""
    y = np.ascontiguousarray(y, dtype=float)
    T, J = h.shape
    if T < 2:
        raise ValueError("gibbs_run needs at least two time points")
    if y.shape != (T,):
        raise ValueError(f"y has shape {y.shape}, panel has {T} rows")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    burn = cfg.burn_in if burn is None else int(burn)
    K = cfg.kept_draws
    d = cfg.discounts
    prior = cfg.prior(J)
    p = J + 1
    n = _shapes(cfg, T)
    x = np.array(h.f if x_init is None else x_init, dtype=float)
    if x.shape != (T, J):
        raise ValueError("x_init must match the panel shape")

    out = dict(
        theta=np.empty((K, T + 1, p)), v=np.empty((K, T + 1)), x=np.empty((K, T, J)),
        m=np.empty((K, p)), C=np.empty((K, p, p)), n=np.empty(K), s=np.empty(K),
    )
    lam_shape = np.broadcast_to((h.dof + 1.0) / 2.0, (T, J))
    eta_shape = (1.0 - d.beta) * n[:T] / 2.0
    g = stream.generator
    total = burn + K
    done = 0
    while done < total:
        S = min(BLOCK, total - done)
        g_T = g.standard_gamma(n[T] / 2.0, size=S)
        g_eta = g.standard_gamma(eta_shape, size=(S, T)) if d.beta < 1.0 else np.zeros((S, T))
        z_theta = g.standard_normal((S, T + 1, p))
        g_lam = g.standard_gamma(lam_shape, size=(S, T, J))
        z_x = g.standard_normal((S, T, J))
        z_e = g.standard_normal((S, T))
        keep_from = max(burn - done, 0)
        nk = S - min(keep_from, S)
        k0 = max(done - burn, 0)
        blk = dict(
            theta=np.empty((max(nk, 1), T + 1, p)), v=np.empty((max(nk, 1), T + 1)),
            x=np.empty((max(nk, 1), T, J)), m=np.empty((max(nk, 1), p)),
            C=np.empty((max(nk, 1), p, p)), n=np.empty(max(nk, 1)), s=np.empty(max(nk, 1)),
        )
        x = _kernels.gibbs_sweeps(
            y, h.f, h.q, h.dof, x, prior.m, prior.C, prior.n, prior.s, d.delta, d.beta,
            g_T, g_eta, z_theta, g_lam, z_x, z_e, keep_from,
            blk["theta"], blk["v"], blk["x"], blk["m"], blk["C"], blk["n"], blk["s"],
        )
        if nk > 0:
            for key in out:
                out[key][k0:k0 + nk] = blk[key][:nk]
        done += S

    return SynthesisDraws(
        out["theta"], out["v"], out["x"], out["m"], out["C"], out["n"], out["s"], d, last_x=x
    )


def predict_next(
    draws: SynthesisDraws,
    h_next: ForecastPanel,
    d: Discounts | None,
    stream: RandomStream,
) -> tuple[float, np.ndarray]:
    """One-step-ahead predictive draws of y, one per kept posterior draw.

    Returns the predictive mean (the squared-error optimal point forecast)
    and the draws themselves.
    """
    K = len(draws)
    if K == 0:
        raise ValueError("no posterior draws to predict from")
    d = draws.discounts if d is None else d
    f, q, dof = (np.ravel(a) for a in (h_next.f, h_next.q, h_next.dof))
    J = f.size
    g = stream.generator
    theta_T = draws.theta[:, -1, :]
    v_T = draws.v[:, -1]
    n_T, s_T = draws.term_n, draws.term_s

    if d.beta < 1.0:
        gam = g.beta(d.beta * n_T / 2.0, (1.0 - d.beta) * n_T / 2.0)
        v_next = v_T * d.beta / gam
    else:
        v_next = v_T.copy()

    W = draws.term_C * ((1.0 - d.delta) / d.delta / s_T)[:, None, None]
    z = g.standard_normal(theta_T.shape)
    theta_next = theta_T
    if d.delta < 1.0:
        w, U = np.linalg.eigh(W * v_T[:, None, None])
        root = U * np.sqrt(np.clip(w, 0.0, None))[:, None, :]
        theta_next = theta_T + np.einsum("kij,kj->ki", root, z)

    lam = g.standard_gamma(dof / 2.0, size=(K, J)) / (dof / 2.0)
    x_next = f + g.standard_normal((K, J)) * np.sqrt(q / lam)
    mean = theta_next[:, 0] + np.einsum("kj,kj->k", x_next, theta_next[:, 1:])
    samples = mean + np.sqrt(v_next) * g.standard_normal(K)
    return float(samples.mean()), samples


def batch_means_se(samples, n_batches=None) -> float:
    """Monte Carlo standard error of the mean of an ordered chain.

    The chain is cut into ``n_batches`` contiguous batches (default
    ``floor(sqrt(K))``) and the spread of the batch means is used, so
    positive autocorrelation inflates the estimate as it should.
    """
    x = np.asarray(samples, dtype=float)
    K = x.size
    b = int(np.sqrt(K)) if n_batches is None else int(n_batches)
    if K < 4 or b < 2:
        return float(x.std(ddof=1) / np.sqrt(K)) if K > 1 else float("inf")
    size = K // b
    means = x[: b * size].reshape(b, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(b))


@dataclass
class SequentialResult:
    """Output of :func:`sequential_bps`: forecasts for panel rows
    ``index``, and the posterior mean of theta'_t at each origin's last
    observed time. ``point_se`` is the batch-means Monte Carlo standard
    error of each point forecast, which allows for autocorrelation in
    the Gibbs chain."""

    index: np.ndarray
    points: np.ndarray
    coef_means: np.ndarray
    point_se: np.ndarray | None = None


def sequential_bps(
    y,
    h: ForecastPanel,
    cfg: BpsConfig,
    stream: RandomStream,
    n_train: int = 25,
    protocol: Literal["warm_start", "full_rerun"] = "warm_start",
) -> SequentialResult:
    """Forecast rows ``n_train .. len(h) - 1`` one step ahead.

    The forecast for row t uses ``y[:t]``, ``h[:t]`` and the agents'
    forecasts ``h[t]``. Under ``warm_start`` the chain for origin t starts
    from the previous origin's final latent draw and burns only
    ``cfg.warm_start_burn`` sweeps.
    """
    if protocol in ("warm", "warm_start"):
        warm = True
    elif protocol in ("full", "full_rerun"):
        warm = False
    else:
        raise ValueError(f"unknown protocol {protocol!r}; expected 'warm_start' or 'full_rerun'")
    y = np.asarray(y, dtype=float)
    N = len(h)
    if y.size < N - 1:
        raise ValueError("y must cover every panel row except possibly the last")
    if n_train < 2 or n_train >= N:
        raise ValueError("need 2 <= n_train < len(panel)")
    index = np.arange(n_train, N)
    points = np.empty(index.size)
    J = h.shape[1]
    coef = np.empty((index.size, J + 1))
    se = np.empty(index.size)
    x_prev = None
    for i, t in enumerate(index):
        s = stream.child(int(t))
        if warm and x_prev is not None:
            x0 = np.vstack([x_prev, h.f[t - 1:t]])
            draws = gibbs_run(y[:t], h[:t], cfg, s, x_init=x0, burn=cfg.warm_start_burn)
        else:
            draws = gibbs_run(y[:t], h[:t], cfg, s)
        x_prev = draws.last_x
        points[i], samples = predict_next(draws, h[t], cfg.discounts, s.child(1))
        se[i] = batch_means_se(samples)
        coef[i] = draws.theta[:, -1, :].mean(axis=0)
    return SequentialResult(index, points, coef, se)
