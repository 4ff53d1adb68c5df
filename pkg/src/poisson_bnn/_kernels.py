"""Compiled leapfrog trajectory for the Poisson network potential.

Same arithmetic as ``network.grad_data_error`` plus the Gaussian penalty,
looped in numba so a whole trajectory runs without interpreter overhead.
Weight layout matches ``network.pack``.
"""

import math

import numba as nb
import numpy as np


@nb.njit(cache=True)
def energy_grad(XT, t, alpha, w, n_hidden, cap, g, H, A):
    """Fill ``g`` with grad S(w); return ``(S, ok)``. ``ok`` is False on overflow."""
    d, N = XT.shape
    M = n_hidden
    nW = w.shape[0]
    o_b1 = M * d
    o_w2 = o_b1 + M
    b2 = w[nW - 1]
    for n in range(N):
        A[n] = b2
    for j in range(M):
        bj = w[o_b1 + j]
        vj = w[o_w2 + j]
        for n in range(N):
            z = bj
            for i in range(d):
                z += w[i * M + j] * XT[i, n]
            e = math.exp(-2.0 * abs(z))
            h = (1.0 - e) / (1.0 + e)
            if z < 0.0:
                h = -h
            H[j, n] = h
            A[n] += vj * h
    U = 0.0
    g_b2 = 0.0
    for n in range(N):
        a = A[n]
        if not a <= cap:
            return np.inf, False
        y = math.exp(a)
        U += y - t[n] * a
        A[n] = y - t[n]
        g_b2 += A[n]
    for k in range(nW):
        g[k] = alpha[k] * w[k]
        U += 0.5 * alpha[k] * w[k] * w[k]
    g[nW - 1] += g_b2
    for j in range(M):
        vj = w[o_w2 + j]
        s_w2 = 0.0
        s_b1 = 0.0
        for n in range(N):
            h = H[j, n]
            s_w2 += A[n] * h
            dz = A[n] * vj * (1.0 - h * h)
            s_b1 += dz
            for i in range(d):
                g[i * M + j] += dz * XT[i, n]
        g[o_w2 + j] += s_w2
        g[o_b1 + j] += s_b1
    if not math.isfinite(U):
        return U, False
    return U, True


@nb.njit(cache=True)
def trajectory(XT, t, alpha, w0, p0, g0, eps, n_steps, n_hidden, cap):
    """Leapfrog: half momentum step, ``n_steps`` full steps, final half step.

    Returns ``(w, p, g, U, ok)``.
    """
    nW = w0.shape[0]
    N = XT.shape[1]
    H = np.empty((n_hidden, N))
    A = np.empty(N)
    w = w0.copy()
    p = p0.copy()
    g = g0.copy()
    U = np.inf
    for k in range(nW):
        p[k] -= 0.5 * eps * g[k]
    for step in range(n_steps):
        for k in range(nW):
            w[k] += eps * p[k]
        U, ok = energy_grad(XT, t, alpha, w, n_hidden, cap, g, H, A)
        if not ok:
            return w, p, g, U, False
        if step < n_steps - 1:
            for k in range(nW):
                p[k] -= eps * g[k]
    for k in range(nW):
        p[k] -= 0.5 * eps * g[k]
        if not math.isfinite(p[k]):
            return w, p, g, U, False
    return w, p, g, U, True
