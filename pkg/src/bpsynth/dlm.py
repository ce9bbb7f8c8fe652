"""Conjugate random-walk dynamic linear model with discount factors.

State evolution is a random walk whose variance is set implicitly by the
state discount ``delta`` (R = C / delta); the observation variance follows
the beta-gamma discount volatility model controlled by ``beta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .statdist import RandomStream, StudentT


@dataclass(frozen=True)
class Discounts:
    delta: float = 0.95
    beta: float = 0.99

    def __post_init__(self):
        for name in ("delta", "beta"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise ValueError(f"discount {name} must lie in (0, 1], got {val}")


@dataclass(frozen=True)
class NigState:
    """Normal-inverse-gamma summary: theta | v ~ N(m, C v / s), 1/v ~ G(n/2, n s/2)."""

    m: np.ndarray
    C: np.ndarray
    n: float
    s: float

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if C.shape != (m.size, m.size):
            raise ValueError(f"C has shape {C.shape}, expected {(m.size, m.size)}")
        if not self.n > 0 or not self.s > 0:
            raise ValueError("NigState requires n > 0 and s > 0")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "C", C)

    @property
    def dim(self) -> int:
        return self.m.size

    @classmethod
    def vague(cls, p: int, n0: float, s0: float, m0=None, scale: float = 1.0) -> "NigState":
        """theta_0 | v_0 ~ N(m0, (v_0 / s0) scale I), 1/v_0 ~ G(n0/2, n0 s0/2)."""
        m0 = np.zeros(p) if m0 is None else np.asarray(m0, dtype=float)
        return cls(m0, scale * np.eye(p), n0, s0)


@dataclass(frozen=True)
class FilterHistory:
    """Per-time filter records. Posterior arrays carry the initial prior at
    index 0; forecast and regressor arrays are indexed by observation."""

    F: np.ndarray
    y: np.ndarray
    m: np.ndarray
    C: np.ndarray
    n: np.ndarray
    s: np.ndarray
    f: np.ndarray
    q: np.ndarray
    dof: np.ndarray
    discounts: Discounts = field(default_factory=Discounts)

    def __len__(self):
        return self.y.shape[0]

    def state(self, t: int) -> NigState:
        return NigState(self.m[t], self.C[t], self.n[t], self.s[t])

    def forecasts(self) -> list[StudentT]:
        return [StudentT(f, q, d) for f, q, d in zip(self.f, self.q, self.dof)]


def _regressor(F, dim) -> np.ndarray:
    F = np.atleast_1d(np.asarray(F, dtype=float))
    if F.shape != (dim,):
        raise ValueError(f"regressor has shape {F.shape}, state has dimension {dim}")
    return F


def evolve_forecast(state: NigState, F, d: Discounts) -> tuple[NigState, StudentT]:
    """Random-walk evolution plus one-step forecast.

    The returned prior carries ``a = m``, ``R = C / delta`` and the
    discounted dof ``beta * n``.
    """
    F = _regressor(F, state.dim)
    R = state.C / d.delta
    prior = NigState(state.m.copy(), R, d.beta * state.n, state.s)
    f = float(F @ state.m)
    q = float(F @ R @ F + state.s)
    return prior, StudentT(f, q, prior.n)


def update(prior: NigState, forecast: StudentT, F, y: float) -> NigState:
    F = _regressor(F, prior.dim)
    q = forecast.scale
    if not q > 0:
        raise FloatingPointError(f"non-positive forecast scale {q}")
    e = y - forecast.location
    A = prior.C @ F / q
    n = prior.n + 1.0
    s = prior.s * (prior.n + e * e / q) / n
    C = (s / prior.s) * (prior.C - np.outer(A, A) * q)
    C = 0.5 * (C + C.T)
    return NigState(prior.m + A * e, C, n, s)


def filter_series(y, F, prior: NigState, d: Discounts) -> FilterHistory:
    """Forward-filter ``y`` (length T) against regressors ``F`` (T x p)."""
    y = np.ascontiguousarray(y, dtype=float)
    F = np.ascontiguousarray(np.atleast_2d(F), dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("filter_series needs a non-empty 1-d series")
    if F.shape != (y.size, prior.dim):
        raise ValueError(f"regressors have shape {F.shape}, expected {(y.size, prior.dim)}")
    m, C, n, s, f, q = _kernels.forward_filter(
        y, F, prior.m, np.ascontiguousarray(prior.C), float(prior.n), float(prior.s), d.delta, d.beta
    )
    return FilterHistory(F, y, m, C, n, s, f, q, d.beta * n[:-1], d)


def run_agent(y, x, prior: NigState, d: Discounts, intercept: bool = True):
    """Sequential one-covariate agent.

    Regressor at time t is ``(1, x_t)`` (or ``(x_t,)`` without intercept).
    Returns the filter history and the one-step forecasts issued before each
    ``y_t`` was revealed.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.size == 0:
        raise ValueError("run_agent needs at least one observation")
    if x.shape != y.shape:
        raise ValueError("series lengths differ")
    F = np.column_stack([np.ones_like(x), x]) if intercept else x[:, None]
    hist = filter_series(y, F, prior, d)
    return hist, hist.forecasts()


def ffbs_sample(h: FilterHistory, d: Discounts, stream: RandomStream):
    """One joint draw of ``(theta_t, v_t)`` for t = 0..T from the smoothing
    posterior of a filtered discount DLM."""
    g = stream.generator
    T, p = len(h), h.m.shape[1]
    g_T = g.standard_gamma(h.n[T] / 2.0)
    g_eta = g.standard_gamma((1.0 - d.beta) * h.n[:T] / 2.0) if d.beta < 1.0 else np.zeros(T)
    z = g.standard_normal((T + 1, p))
    return _kernels.backward_sample(h.m, h.C, h.n, h.s, d.delta, d.beta, g_T, g_eta, z)
