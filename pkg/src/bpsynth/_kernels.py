"""Compiled inner loops for the discount DLM filter, FFBS and the BPS Gibbs
sweep. All randomness is passed in pre-drawn so results depend only on the
calling RandomStream."""

import numpy as np
from numba import njit


@njit(cache=True)
def _chol_psd(A):
    # Cholesky that tolerates tiny negative pivots from round-off.
    p = A.shape[0]
    L = np.zeros((p, p))
    for j in range(p):
        d = A[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if d <= 0.0:
            L[j, j] = 0.0
            continue
        L[j, j] = np.sqrt(d)
        for i in range(j + 1, p):
            acc = A[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            L[i, j] = acc / L[j, j]
    return L


@njit(cache=True)
def forward_filter(y, F, m0, C0, n0, s0, delta, beta):
    """Discount filter over ``T`` observations.

    Returns posterior arrays indexed 0..T (index 0 is the initial prior) and
    one-step forecast arrays ``f, q`` indexed 0..T-1.
    """
    T = y.shape[0]
    p = m0.shape[0]
    m = np.empty((T + 1, p))
    C = np.empty((T + 1, p, p))
    n = np.empty(T + 1)
    s = np.empty(T + 1)
    f = np.empty(T)
    q = np.empty(T)
    m[0] = m0
    C[0] = C0
    n[0] = n0
    s[0] = s0
    RF = np.empty(p)
    for t in range(T):
        nprior = beta * n[t]
        ft = 0.0
        for i in range(p):
            ft += F[t, i] * m[t, i]
        for i in range(p):
            acc = 0.0
            for k in range(p):
                acc += C[t, i, k] * F[t, k]
            RF[i] = acc / delta
        qt = s[t]
        for i in range(p):
            qt += F[t, i] * RF[i]
        e = y[t] - ft
        nn = nprior + 1.0
        ss = s[t] * (nprior + e * e / qt) / nn
        r = ss / s[t]
        for i in range(p):
            m[t + 1, i] = m[t, i] + RF[i] / qt * e
        for i in range(p):
            for k in range(i, p):
                c = r * (C[t, i, k] / delta - RF[i] * RF[k] / qt)
                if k > i:
                    c = 0.5 * (c + r * (C[t, k, i] / delta - RF[k] * RF[i] / qt))
                C[t + 1, i, k] = c
                C[t + 1, k, i] = c
        n[t + 1] = nn
        s[t + 1] = ss
        f[t] = ft
        q[t] = qt
    return m, C, n, s, f, q


@njit(cache=True)
def backward_sample(m, C, n, s, delta, beta, g_T, g_eta, z):
    """Backward pass of FFBS.

    ``g_T`` is a G(n_T/2, 1) draw, ``g_eta[t]`` a G((1-beta) n_t/2, 1) draw
    (ignored when beta == 1) and ``z`` standard normals of shape (T+1, p).
    """
    Tp1, p = m.shape
    T = Tp1 - 1
    theta = np.empty((Tp1, p))
    v = np.empty(Tp1)
    phi = g_T / (n[T] * s[T] / 2.0)
    v[T] = 1.0 / phi
    L = _chol_psd(C[T] * (v[T] / s[T]))
    for i in range(p):
        acc = m[T, i]
        for k in range(i + 1):
            acc += L[i, k] * z[T, k]
        theta[T, i] = acc
    for t in range(T - 1, -1, -1):
        if beta < 1.0:
            phi = beta * phi + g_eta[t] / (n[t] * s[t] / 2.0)
        v[t] = 1.0 / phi
        if delta < 1.0:
            L = _chol_psd(C[t] * ((1.0 - delta) * v[t] / s[t]))
            for i in range(p):
                acc = (1.0 - delta) * m[t, i] + delta * theta[t + 1, i]
                for k in range(i + 1):
                    acc += L[i, k] * z[t, k]
                theta[t, i] = acc
        else:
            for i in range(p):
                theta[t, i] = theta[t + 1, i]
    return theta, v


@njit(cache=True)
def draw_latent(y, f, q, lam, theta, v, z_x, z_e):
    """Joint draw of each x_t from its Gaussian full conditional.

    Prior x_t ~ N(f_t, diag(q_t / lam_t)); observation
    y_t ~ N(theta0_t + theta_t . x_t, v_t). Uses the exact rank-one
    conditioning identity: draw from the prior, simulate a pseudo
    observation, then shift by the Kalman gain.
    """
    T, J = f.shape
    x = np.empty((T, J))
    for t in range(T):
        c = v[t]
        y0 = theta[t, 0] + np.sqrt(v[t]) * z_e[t]
        for j in range(J):
            dj = q[t, j] / lam[t, j]
            x[t, j] = f[t, j] + np.sqrt(dj) * z_x[t, j]
            c += theta[t, j + 1] * theta[t, j + 1] * dj
            y0 += theta[t, j + 1] * x[t, j]
        g = (y[t] - y0) / c
        for j in range(J):
            x[t, j] += q[t, j] / lam[t, j] * theta[t, j + 1] * g
    return x


@njit(cache=True)
def gibbs_sweeps(y, f, q, dof, x, m0, C0, n0, s0, delta, beta,
                 g_T, g_eta, z_theta, g_lam, z_x, z_e, keep_from,
                 out_theta, out_v, out_x, out_m, out_C, out_n, out_s):
    """Run ``len(g_T)`` Gibbs sweeps starting from latent state ``x``.

    Sweeps with index >= ``keep_from`` are written to the ``out_*`` arrays.
    Time index 0 of theta/v is the prior point; observations are 1..T.
    """
    S = g_T.shape[0]
    T, J = f.shape
    p = J + 1
    F = np.empty((T, p))
    for t in range(T):
        F[t, 0] = 1.0
    lam = np.empty((T, J))
    for it in range(S):
        for t in range(T):
            for j in range(J):
                F[t, j + 1] = x[t, j]
        m, C, n, s, _, _ = forward_filter(y, F, m0, C0, n0, s0, delta, beta)
        theta, v = backward_sample(m, C, n, s, delta, beta, g_T[it], g_eta[it], z_theta[it])
        for t in range(T):
            for j in range(J):
                r = x[t, j] - f[t, j]
                lam[t, j] = g_lam[it, t, j] / ((dof[t, j] + r * r / q[t, j]) / 2.0)
        x = draw_latent(y, f, q, lam, theta[1:], v[1:], z_x[it], z_e[it])
        k = it - keep_from
        if k >= 0:
            out_theta[k] = theta
            out_v[k] = v
            out_x[k] = x
            out_m[k] = m[T]
            out_C[k] = C[T]
            out_n[k] = n[T]
            out_s[k] = s[T]
    return x
