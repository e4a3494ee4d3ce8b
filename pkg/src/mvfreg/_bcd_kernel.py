"""Compiled inner loop of the smooth-sparse block coordinate descent.

One sweep visits the given blocks in order and minimizes each block of

    a'(Z'Z/n)a + tau(1-lam) sum ||a_j||_eta^2 + tau*lam (sum ||a_j||_eta)^2
    - 2 c'a

exactly, holding the others fixed. Per block that is a group soft-threshold
in whitened coordinates whose radial part solves the secular equation
sum q_i^2/(nu*lam_i + kappa)^2 = 1. The caller maintains per-block
eigendecompositions (U, W = Linv' U, lam) of the whitened quadratics and the
per-block score contributions.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _secular(lam_e, q, kappa, warm):
    """Root of psi(nu) = sum q_i^2/(nu*lam_i+kappa)^2 - 1 (convex, falling)."""
    D = q.size
    if kappa <= 0.0:
        acc = 0.0
        for i in range(D):
            acc += (q[i] / lam_e[i]) ** 2
        return np.sqrt(acc)
    qn = 0.0
    for i in range(D):
        qn += q[i] * q[i]
    qn = np.sqrt(qn)
    nu = warm
    if nu <= 0.0:
        nu = (qn - kappa) / lam_e[D - 1]
        if nu <= 0.0:
            nu = 1e-30
    for _ in range(200):
        psi = -1.0
        dpsi = 0.0
        for i in range(D):
            den = nu * lam_e[i] + kappa
            r = q[i] / den
            psi += r * r
            dpsi -= 2.0 * r * r * lam_e[i] / den
        if abs(psi) <= 1e-14:
            break
        if dpsi >= 0.0:
            break
        step = -psi / dpsi
        nu_next = nu + step
        if nu_next <= 0.0:
            nu_next = nu * 0.5
        if abs(nu_next - nu) <= 1e-16 * max(nu, 1.0):
            nu = nu_next
            break
        nu = nu_next
    return nu


@numba.njit(cache=True)
def sweep(idx, Zb, C2, Linv, U_all, W_all, lam_all, A, norms, contrib, score,
          R_sum, tau, lam, n):
    """One Gauss-Seidel pass over the blocks in ``idx``.

    Mutates A, norms, contrib and score in place; returns (max relative
    block change, updated sum of block norms).
    """
    p, nn, D = Zb.shape
    R = R_sum
    max_change = 0.0
    s_other = np.empty(nn)
    g = np.empty(D)
    b = np.empty(D)
    q = np.empty(D)
    f = np.empty(D)
    d_new = np.empty(D)
    for ii in range(idx.size):
        j = idx[ii]
        for i in range(nn):
            s_other[i] = score[i] - contrib[j, i]
        for d in range(D):
            g[d] = -C2[j, d]
        inv_n = 1.0 / n
        for i in range(nn):
            si = s_other[i] * inv_n
            for d in range(D):
                g[d] += Zb[j, i, d] * si
        for d in range(D):
            acc = 0.0
            for e in range(d + 1):  # Linv is lower triangular
                acc += Linv[d, e] * g[e]
            b[d] = acc
        bn = 0.0
        for d in range(D):
            bn += b[d] * b[d]
        bn = np.sqrt(bn)
        nu_old = norms[j]
        kappa = tau * lam * (R - nu_old)
        if bn <= kappa:
            if nu_old > 0.0:
                change = 0.0
                for d in range(D):
                    change += A[j, d] * A[j, d]
                change = np.sqrt(change)
                for d in range(D):
                    A[j, d] = 0.0
                for i in range(nn):
                    score[i] -= contrib[j, i]
                    contrib[j, i] = 0.0
                R -= nu_old
                norms[j] = 0.0
                rel = change / (1.0 + nu_old)
                if rel > max_change:
                    max_change = rel
            continue
        for d in range(D):
            acc = 0.0
            for e in range(D):
                acc += U_all[j, e, d] * b[e]  # U' b
            q[d] = acc
        nu = _secular(lam_all[j], q, kappa, nu_old)
        if kappa > 0.0:
            for d in range(D):
                f[d] = -nu * q[d] / (nu * lam_all[j, d] + kappa)
        else:
            for d in range(D):
                f[d] = -q[d] / lam_all[j, d]
        for d in range(D):
            acc = 0.0
            for e in range(D):
                acc += W_all[j, d, e] * f[e]
            d_new[d] = acc
        change = 0.0
        for d in range(D):
            diff = d_new[d] - A[j, d]
            change += diff * diff
            A[j, d] = d_new[d]
        change = np.sqrt(change)
        for i in range(nn):
            acc = 0.0
            for d in range(D):
                acc += Zb[j, i, d] * d_new[d]
            score[i] += acc - contrib[j, i]
            contrib[j, i] = acc
        nu_new = 0.0
        for d in range(D):
            nu_new += f[d] * f[d]
        nu_new = np.sqrt(nu_new)
        R += nu_new - nu_old
        norms[j] = nu_new
        rel = change / (1.0 + nu_new)
        if rel > max_change:
            max_change = rel
    return max_change, R
