"""Simulation study: a drifting, misspecified data-generating process, two
single-covariate DLM agents, four combination methods and MSFE scoring."""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bps import BpsConfig, ForecastPanel, sequential_bps
from .combine import BmaScoreState, bma_update, equal_weights, mallows_weights
from .dlm import Discounts, NigState, run_agent
from .statdist import RandomStream, _t_logpdf

log = logging.getLogger(__name__)

METHODS = ("EW", "BMA", "Cp", "BPS")
CHECKPOINTS = (100, 200, 300)

# stream ids within one replication
_DGP, _BPS = 0, 1


@dataclass(frozen=True)
class DgpConfig:
    """Target y_t = a_t + sum_i theta_{t,i} xi_{t,i} + nu_t with random-walk
    a_t and theta_t. The agents see xi1 and xi2 only; both are noisy
    copies of the omitted xi3.

    All noise parameters are variances. The defaults are the squares of the
    published noise levels, read as standard deviations.
    """

    noise_var: float = 1e-4
    coef13: float = 1.0 / 3.0
    coef23: float = 1.0 / 5.0
    var1: float = (0.01 * 2.0 / 3.0) ** 2
    var2: float = (0.01 * 4.0 / 5.0) ** 2
    theta_init: float = 1.0
    a_init: float = 0.0
    burn: int = 50
    total_after_burn: int = 350

    def __post_init__(self):
        for name in ("noise_var", "var1", "var2"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if self.burn < 0:
            raise ValueError("burn must be non-negative")
        if self.total_after_burn < 1:
            raise ValueError("total_after_burn must be positive")

    @classmethod
    def variance_reading(cls, **kw) -> "DgpConfig":
        """Alternative reading where the published levels are variances."""
        base = dict(noise_var=0.01, var1=0.01 * 2.0 / 3.0, var2=0.01 * 4.0 / 5.0)
        base.update(kw)
        return cls(**base)

    def xi_corr(self, i: int) -> float:
        """Population correlation of xi_i (i = 1, 2) with xi3."""
        c, v = (self.coef13, self.var1) if i == 1 else (self.coef23, self.var2)
        return c * self.noise_var / np.sqrt(self.noise_var * (c * c * self.noise_var + v))

    def xi_var(self, i: int) -> float:
        c, v = (self.coef13, self.var1) if i == 1 else (self.coef23, self.var2)
        return c * c * self.noise_var + v


@dataclass(frozen=True)
class SimPath:
    y: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    xi3: np.ndarray
    a: np.ndarray
    theta_dgp: np.ndarray

    def __len__(self):
        return self.y.size


def generate_path(cfg: DgpConfig, stream: RandomStream) -> SimPath:
    g = stream.generator
    n = cfg.burn + cfg.total_after_burn
    sd = np.sqrt(cfg.noise_var)
    a = cfg.a_init + np.cumsum(sd * g.standard_normal(n))
    theta = cfg.theta_init + np.cumsum(sd * g.standard_normal((n, 3)), axis=0)
    xi3 = sd * g.standard_normal(n)
    xi1 = cfg.coef13 * xi3 + np.sqrt(cfg.var1) * g.standard_normal(n)
    xi2 = cfg.coef23 * xi3 + np.sqrt(cfg.var2) * g.standard_normal(n)
    nu = sd * g.standard_normal(n)
    xi = np.column_stack([xi1, xi2, xi3])
    y = a + np.einsum("ti,ti->t", theta, xi) + nu
    keep = slice(cfg.burn, n)
    return SimPath(y[keep], xi1[keep], xi2[keep], xi3[keep], a[keep], theta[keep])


@dataclass(frozen=True)
class AgentConfig:
    """Shared prior and discounts of the single-covariate agents."""

    n0: float = 2.0
    s0: float = 0.01
    prior_scale: float = 1.0
    discounts: Discounts = field(default_factory=lambda: Discounts(delta=0.99, beta=0.95))
    intercept: bool = True

    def prior(self) -> NigState:
        return NigState.vague(2 if self.intercept else 1, self.n0, self.s0, scale=self.prior_scale)


@dataclass(frozen=True)
class StudyConfig:
    """Everything one replication needs besides its id."""

    dgp: DgpConfig = field(default_factory=DgpConfig)
    agents: AgentConfig = field(default_factory=AgentConfig)
    bps: BpsConfig = field(default_factory=BpsConfig)
    protocol: str = "warm_start"
    master_seed: int = 0
    n_agent_only: int = 25
    n_calibrate: int = 25
    mallows_k: int = 2


@dataclass
class ReplicationResult:
    """Forecast window outputs of one replication, aligned on the same
    realised values ``y``."""

    rep_id: int
    y: np.ndarray
    forecasts: dict
    bma_weights: np.ndarray
    mallows_weights: np.ndarray
    bps_coef: np.ndarray

    def sq_errors(self, method: str) -> np.ndarray:
        return (self.y - self.forecasts[method]) ** 2

    def cum_msfe(self, method: str, t: int) -> float:
        if not 1 <= t <= self.y.size:
            raise ValueError(f"checkpoint {t} outside the forecast window")
        return float(self.sq_errors(method)[:t].mean())


def run_agents(path: SimPath, agents: AgentConfig) -> ForecastPanel:
    hists = [run_agent(path.y, x, agents.prior(), agents.discounts, agents.intercept)[0]
             for x in (path.xi1, path.xi2)]
    return ForecastPanel.from_histories(hists)


def combine_forecasts(y, panel: ForecastPanel, cfg: StudyConfig, stream: RandomStream,
                      rep_id: int = 0) -> ReplicationResult:
    """Run the four combination methods on a fixed agent panel.

    Rows before ``cfg.n_agent_only`` are agent burn-in; the next
    ``cfg.n_calibrate`` rows calibrate the combiners; every later row is
    forecast and scored.
    """
    y = np.asarray(y, dtype=float)
    start = cfg.n_agent_only
    first = start + cfg.n_calibrate
    N, J = panel.shape
    if y.size != N or first >= N:
        raise ValueError("series too short for the calibration window")
    idx = np.arange(first, N)

    ew = panel.f[idx] @ equal_weights(J)

    # BMA: predictive log scores accumulated from the start of the calibration window
    lpd = _t_logpdf(y[:, None], panel.f, panel.q, panel.dof)
    state = BmaScoreState.initial(J)
    bma_w = np.empty((idx.size, J))
    for t in range(start, N):
        if t >= first:
            bma_w[t - first] = state.weights()
        state, _ = bma_update(state, lpd[t])
    bma = np.einsum("tj,tj->t", bma_w, panel.f[idx])

    # Mallows: expanding window from the start of calibration
    k = np.full(J, cfg.mallows_k)
    cp_w = np.empty((idx.size, J))
    for i, t in enumerate(idx):
        win = slice(start, t)
        resid = y[win, None] - panel.f[win]
        sigma2 = float(np.min(np.mean(resid ** 2, axis=0)))
        cp_w[i] = mallows_weights(panel.f[win], y[win], k, sigma2)
    cp = np.einsum("tj,tj->t", cp_w, panel.f[idx])

    res = sequential_bps(y[start:], panel[start:], cfg.bps, stream, n_train=cfg.n_calibrate,
                         protocol=cfg.protocol)
    forecasts = {"EW": ew, "BMA": bma, "Cp": cp, "BPS": res.points}
    return ReplicationResult(rep_id, y[idx].copy(), forecasts, bma_w, cp_w, res.coef_means)


def run_replication(rep_id: int, cfg: StudyConfig) -> ReplicationResult:
    """Simulate one path, run the agents and score all methods on it."""
    rep = RandomStream(cfg.master_seed, (int(rep_id),))
    path = generate_path(cfg.dgp, rep.child(_DGP))
    panel = run_agents(path, cfg.agents)
    return combine_forecasts(path.y, panel, cfg, rep.child(_BPS), rep_id=rep_id)


def run_study(cfg: StudyConfig, reps: int | Sequence[int], threads: int = 1) -> list[ReplicationResult]:
    ids = list(range(reps)) if isinstance(reps, int) else [int(r) for r in reps]
    if not ids:
        raise ValueError("need at least one replication")
    threads = max(1, min(int(threads), len(ids), os.cpu_count() or 1))
    if threads == 1:
        out = []
        for r in ids:
            out.append(run_replication(r, cfg))
            log.info("replication %d done", r)
        return out
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(run_replication, ids, [cfg] * len(ids)))


@dataclass
class MsfeReport:
    """Mean over replications of cumulative MSFE at each checkpoint.

    ``msfe[m]`` and ``per_rep[m]`` are indexed by checkpoint position;
    ``ratio[m]`` is 100 * MSFE_BPS / MSFE_m.
    """

    checkpoints: tuple
    msfe: dict
    ratio: dict
    per_rep: dict
    rep_ids: list

    def per_rep_ratio(self, method: str) -> np.ndarray:
        return 100.0 * self.per_rep["BPS"] / self.per_rep[method]


def aggregate(reps: Sequence[ReplicationResult], checkpoints=CHECKPOINTS) -> MsfeReport:
    if len(reps) == 0:
        raise ValueError("aggregate needs at least one replication")
    methods = list(reps[0].forecasts)
    per_rep = {m: np.array([[r.cum_msfe(m, c) for c in checkpoints] for r in reps]) for m in methods}
    msfe = {m: v.mean(axis=0) for m, v in per_rep.items()}
    ratio = {m: 100.0 * msfe["BPS"] / msfe[m] for m in methods} if "BPS" in msfe else {}
    return MsfeReport(tuple(checkpoints), msfe, ratio, per_rep, [r.rep_id for r in reps])


def coefficient_trace(rep: ReplicationResult) -> dict:
    """Per-origin weight and coefficient paths, keyed by method.

    Each value maps coefficient names to a series over the forecast window.
    """
    J = rep.bma_weights.shape[1]
    agents = [f"agent{j + 1}" for j in range(J)]
    return {
        "BMA": dict(zip(agents, rep.bma_weights.T)),
        "Cp": dict(zip(agents, rep.mallows_weights.T)),
        "BPS": dict(zip(["intercept"] + agents, rep.bps_coef.T)),
    }


def intercept_prominence(rep: ReplicationResult) -> tuple[float, float]:
    """Pooled mean |intercept| and mean |agent coefficient| of the BPS path."""
    return float(np.abs(rep.bps_coef[:, 0]).mean()), float(np.abs(rep.bps_coef[:, 1:]).mean())


def _fmt(x: float) -> str:
    return repr(float(x)) if not np.isfinite(x) else f"{x:.17g}"


def write_msfe_report(report: MsfeReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "checkpoint", "msfe", "ratio_vs_bps_pct"])
        for m in report.msfe:
            for i, c in enumerate(report.checkpoints):
                w.writerow([m, c, _fmt(report.msfe[m][i]), _fmt(report.ratio[m][i])])


def write_ratios_by_rep(report: MsfeReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "method", "checkpoint", "ratio"])
        for k, rep in enumerate(report.rep_ids):
            for m in report.msfe:
                r = report.per_rep_ratio(m)
                for i, c in enumerate(report.checkpoints):
                    w.writerow([rep, m, c, _fmt(r[k, i])])


def write_coeff_trace(rep: ReplicationResult, path, methods=None) -> None:
    trace = coefficient_trace(rep)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "method", "coefficient_name", "value"])
        for m in methods or trace:
            for name, series in trace[m].items():
                for t, v in enumerate(series, start=1):
                    w.writerow([t, m, name, _fmt(v)])


def smoke_config(**kw) -> StudyConfig:
    """Reduced MCMC sizes used for the quick 10-replication check."""
    bps = BpsConfig(burn_in=1000, kept_draws=500, warm_start_burn=100)
    return StudyConfig(bps=bps, **kw)
