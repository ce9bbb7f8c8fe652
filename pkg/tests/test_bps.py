import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from bpsynth import _kernels
from bpsynth.bps import (
    BpsConfig,
    ForecastPanel,
    SynthesisDraws,
    batch_means_se,
    gibbs_run,
    predict_next,
    sequential_bps,
    simulate_from_prior,
)
from bpsynth.dlm import Discounts, filter_series
from bpsynth.statdist import RandomStream


def make_panel(T, J=2, bias=(0.0, 0.0), seed=0, common=0.0):
    """Signal-plus-noise target with agents that see the signal with noise
    and optional bias. ``common`` adds a shared error component."""
    g = np.random.default_rng(seed)
    s = g.normal(size=T)
    y = s + 0.1 * g.normal(size=T)
    shared = common * g.normal(size=(T, 1))
    f = s[:, None] + np.asarray(bias)[:J] + 0.2 * g.normal(size=(T, J)) + shared
    return y, ForecastPanel(f, np.full((T, J), 0.04), np.full((T, J), 20.0))


def dense_conditional(y, f, q, lam, theta, v):
    """Mean and covariance of x_t | rest from the joint Gaussian directly."""
    D = np.diag(lam / q)
    b = theta[1:]
    P = D + np.outer(b, b) / v
    cov = np.linalg.inv(P)
    mean = cov @ (D @ f + b * (y - theta[0]) / v)
    return mean, cov


def test_latent_draw_matches_dense_oracle():
    g = np.random.default_rng(2)
    T, J = 6, 3
    y = g.normal(size=T)
    f = g.normal(size=(T, J))
    q = g.uniform(0.1, 2.0, (T, J))
    lam = g.uniform(0.5, 2.0, (T, J))
    theta = g.normal(size=(T, J + 1))
    v = g.uniform(0.05, 1.0, T)
    zero_x, zero_e = np.zeros((T, J)), np.zeros(T)
    mu = _kernels.draw_latent(y, f, q, lam, theta, v, zero_x, zero_e)
    # the draw is affine in the standard normals: columns give a covariance factor
    B = np.empty((T, J, J + 1))
    for k in range(J + 1):
        zx, ze = zero_x.copy(), zero_e.copy()
        if k < J:
            zx[:, k] = 1.0
        else:
            ze[:] = 1.0
        B[:, :, k] = _kernels.draw_latent(y, f, q, lam, theta, v, zx, ze) - mu
    for t in range(T):
        mean, cov = dense_conditional(y[t], f[t], q[t], lam[t], theta[t], v[t])
        assert_allclose(mu[t], mean, rtol=1e-10, atol=1e-12)
        assert_allclose(B[t] @ B[t].T, cov, rtol=1e-10, atol=1e-12)


def test_gibbs_is_deterministic_and_valid():
    y, h = make_panel(30, seed=1)
    cfg = BpsConfig(burn_in=50, kept_draws=300)
    a = gibbs_run(y, h, cfg, RandomStream(3))
    b = gibbs_run(y, h, cfg, RandomStream(3))
    assert_array_equal(a.theta, b.theta)
    assert np.all(a.v > 0)
    assert np.all(np.isfinite(a.theta))
    assert a.theta.shape == (300, 31, 3) and a.x.shape == (300, 30, 2)


def test_gibbs_block_boundaries_do_not_matter():
    # kept draws straddle the pre-draw block size
    y, h = make_panel(12, seed=2)
    draws = gibbs_run(y, h, BpsConfig(burn_in=240, kept_draws=20), RandomStream(0))
    assert np.all(np.isfinite(draws.theta)) and len(draws) == 20


def test_gibbs_input_errors():
    y, h = make_panel(10)
    cfg = BpsConfig(burn_in=1, kept_draws=1)
    with pytest.raises(ValueError):
        gibbs_run(y[:1], h[:1], cfg, RandomStream(0))
    with pytest.raises(ValueError):
        gibbs_run(y[:5], h, cfg, RandomStream(0))
    bad = y.copy()
    bad[3] = np.nan
    with pytest.raises(ValueError):
        gibbs_run(bad, h, cfg, RandomStream(0))
    with pytest.raises(ValueError):
        ForecastPanel([[0.0, np.inf]], [[1.0, 1.0]], [[3.0, 3.0]])


def test_degenerate_agents_reduce_to_dlm():
    y, h = make_panel(40, seed=4)
    tight = ForecastPanel(h.f, np.full(h.shape, 1e-12), h.dof)
    cfg = BpsConfig(burn_in=10, kept_draws=4000)
    draws = gibbs_run(y, tight, cfg, RandomStream(5))
    assert_allclose(draws.x, np.broadcast_to(h.f, draws.x.shape), atol=1e-4)
    F = np.column_stack([np.ones(40), h.f])
    filt = filter_series(y, F, cfg.prior(2), cfg.discounts)
    theta_T = draws.theta[:, -1]
    se = theta_T.std(axis=0) / np.sqrt(len(draws))
    assert np.all(np.abs(theta_T.mean(axis=0) - filt.m[-1]) < 3 * se)
    # posterior variance of a Student-t marginal: C n / (s (n - 2)) times s
    var = np.diag(filt.C[-1]) * filt.n[-1] / (filt.n[-1] - 2)
    assert_allclose(theta_T.var(axis=0), var, rtol=0.1)


def test_constant_signal_recovers_intercept():
    T = 50
    y = np.full(T, 2.0)
    h = ForecastPanel(np.zeros((T, 1)), np.full((T, 1), 1e-12), np.full((T, 1), 10.0))
    draws = gibbs_run(y, h, BpsConfig(burn_in=100, kept_draws=2000), RandomStream(1))
    icpt = draws.intercept[:, 1:]
    se = icpt.std(axis=0) / np.sqrt(len(draws))
    assert np.all(np.abs(icpt[:, 10:].mean(axis=0) - 2.0) < np.maximum(3 * se[10:], 1e-6))


def point_draws(theta_T, v, n=100.0, s=1.0, C=None, K=50):
    p = theta_T.size
    C = np.zeros((K, p, p)) if C is None else np.broadcast_to(C, (K, p, p))
    theta = np.broadcast_to(theta_T, (K, 2, p)).copy()
    return SynthesisDraws(theta, np.full((K, 2), v), np.zeros((K, 1, p - 1)), np.zeros((K, p)), C,
                          np.full(K, n), np.full(K, s), Discounts(1.0, 1.0))


def test_predict_deterministic_limit():
    draws = point_draws(np.array([0.0, 1.0, 0.0]), 1e-30)
    h = ForecastPanel([[1.7, -3.0]], [[1e-30, 1e-30]], [[5.0, 5.0]])
    point, _ = predict_next(draws, h, None, RandomStream(0))
    assert abs(point - 1.7) < 1e-6


def test_predict_total_variance():
    y, h = make_panel(30, seed=6)
    draws = gibbs_run(y, h, BpsConfig(burn_in=200, kept_draws=10_000), RandomStream(2))
    # reproduce v_{T+1} draws with the same stream consumption
    g = RandomStream(9).generator
    d = draws.discounts
    gam = g.beta(d.beta * draws.term_n / 2, (1 - d.beta) * draws.term_n / 2)
    v_next = draws.v[:, -1] * d.beta / gam
    _, samples = predict_next(draws, h[29], None, RandomStream(9))
    assert samples.var() >= v_next.mean()


def test_predict_intercept_only_limit():
    K = 4000
    g = np.random.default_rng(0)
    theta = np.zeros((K, 2, 3))
    theta[:, :, 0] = 0.8 + 0.01 * g.normal(size=(K, 1))
    draws = SynthesisDraws(theta, np.full((K, 2), 0.01), np.zeros((K, 1, 2)), np.zeros((K, 3)),
                           np.broadcast_to(np.eye(3) * 1e-4, (K, 3, 3)), np.full(K, 50.0),
                           np.full(K, 0.01), Discounts(0.95, 0.99))
    point, samples = predict_next(draws, ForecastPanel([[5.0, -4.0]], [[1.0, 1.0]], [[8.0, 8.0]]), None,
                                  RandomStream(4))
    assert abs(point - 0.8) < 3 * samples.std() / np.sqrt(K)


def test_predict_needs_draws():
    draws = point_draws(np.zeros(3), 1.0, K=0)
    with pytest.raises(ValueError):
        predict_next(draws, ForecastPanel([[0.0, 0.0]], [[1.0, 1.0]], [[3.0, 3.0]]), None, RandomStream(0))


def test_sequential_base_case_matches_single_run():
    y, h = make_panel(3, seed=3)
    cfg = BpsConfig(burn_in=30, kept_draws=200)
    s = RandomStream(12)
    res = sequential_bps(y[:2], h, cfg, s, n_train=2)
    draws = gibbs_run(y[:2], h[:2], cfg, s.child(2))
    point, _ = predict_next(draws, h[2], cfg.discounts, s.child(2).child(1))
    assert res.points.shape == (1,)
    assert res.points[0] == point


def test_sequential_rejects_unknown_protocol():
    y, h = make_panel(10)
    with pytest.raises(ValueError):
        sequential_bps(y, h, BpsConfig(burn_in=1, kept_draws=1), RandomStream(0), 5, protocol="sideways")


def test_warm_start_matches_full_rerun():
    y, h = make_panel(60, seed=8)
    cfg = BpsConfig(burn_in=300, kept_draws=400, warm_start_burn=60)
    warm = sequential_bps(y, h, cfg, RandomStream(1), n_train=25, protocol="warm_start")
    full = sequential_bps(y, h, cfg, RandomStream(2), n_train=25, protocol="full_rerun")
    pooled = np.hypot(warm.point_se, full.point_se)
    diff = warm.points - full.points
    # no systematic shift, and no single origin beyond a Bonferroni-level bound
    assert abs(diff.mean()) < 3 * np.sqrt((pooled ** 2).sum()) / diff.size
    assert np.all(np.abs(diff) < 4 * pooled)


def test_batch_means_se():
    g = np.random.default_rng(0)
    iid = g.normal(size=10_000)
    assert_allclose(batch_means_se(iid), 0.01, rtol=0.3)
    # AR(1) with phi = 0.9 has a long-run sd of 1 / (1 - phi) times the innovation sd
    e = g.normal(size=40_000)
    ar = np.empty_like(e)
    ar[0] = e[0]
    for i in range(1, e.size):
        ar[i] = 0.9 * ar[i - 1] + e[i]
    assert_allclose(batch_means_se(ar), 10 / np.sqrt(e.size), rtol=0.3)


def pooled_abs_intercept(draws):
    m = np.abs(draws.intercept[:, 1:].mean(axis=0))
    return m.mean(), m.std(ddof=1) / np.sqrt(m.size)


def test_intercept_absorbs_agent_bias():
    cfg = BpsConfig(burn_in=300, kept_draws=1000)
    y0, h0 = make_panel(80, seed=11)
    y1, h1 = make_panel(80, bias=(0.5, 0.3), seed=11, common=0.1)
    a0, se0 = pooled_abs_intercept(gibbs_run(y0, h0, cfg, RandomStream(1)))
    a1, se1 = pooled_abs_intercept(gibbs_run(y1, h1, cfg, RandomStream(1)))
    assert a1 - a0 > 1.96 * np.hypot(se0, se1)


def test_label_equivariance():
    y, h = make_panel(40, seed=13)
    perm = [1, 0]
    hp = ForecastPanel(h.f[:, perm], h.q[:, perm], h.dof[:, perm])
    cfg = BpsConfig(burn_in=300, kept_draws=3000)
    a = gibbs_run(y, h, cfg, RandomStream(3))
    b = gibbs_run(y, hp, cfg, RandomStream(4))
    ca, cb = a.coefficients.mean(axis=0), b.coefficients.mean(axis=0)[:, perm]
    # allow for autocorrelation with an effective sample size of K / 20
    keff = len(a) / 20
    se = np.sqrt(a.coefficients.var(axis=0) / keff + b.coefficients.var(axis=0)[:, perm] / keff)
    assert np.all(np.abs(ca - cb) < 5 * se)


def test_prior_simulator_shapes_and_limits():
    _, h = make_panel(15)
    static = BpsConfig(discounts=Discounts(1.0, 1.0))
    d = simulate_from_prior(h, static, RandomStream(0))
    assert d.y.shape == (15,) and d.x.shape == (15, 2) and d.theta.shape == (16, 3)
    assert_array_equal(d.theta, np.broadcast_to(d.theta[0], d.theta.shape))
    assert_array_equal(d.v, d.v[0])
    again = simulate_from_prior(h, static, RandomStream(0))
    assert_array_equal(d.y, again.y)
    tight = ForecastPanel(h.f, np.full(h.shape, 1e-300), h.dof)
    assert_allclose(simulate_from_prior(tight, BpsConfig(), RandomStream(1)).x, h.f, atol=1e-100)


def test_calibration_with_observed_agents():
    # with agents' latent values pinned the sampler reduces to exact FFBS,
    # so 90% intervals must cover at the nominal rate
    cfg = BpsConfig(burn_in=20, kept_draws=400)
    hits = []
    for r in range(150):
        g = np.random.default_rng(r)
        h = ForecastPanel(g.normal(size=(20, 2)), np.full((20, 2), 1e-12), np.full((20, 2), 10.0))
        d = simulate_from_prior(h, cfg, RandomStream(r, 0))
        draws = gibbs_run(d.y, h, cfg, RandomStream(r, 1))
        lo, hi = np.quantile(draws.theta[:, -1], [0.05, 0.95], axis=0)
        hits.append((d.theta[-1] >= lo) & (d.theta[-1] <= hi))
    cover = np.mean(hits)
    se = np.sqrt(0.9 * 0.1 / (3 * len(hits)))
    assert abs(cover - 0.9) < 3.5 * se
