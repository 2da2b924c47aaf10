"""Compiled inner loops for learning from partially observed signals.

Observed signals are packed in compressed form: ``vals[ptr[i]:ptr[i+1]]``
holds the observed values of signal ``i`` at rows ``idx[ptr[i]:ptr[i+1]]``,
and ``cidx[cptr[i]:cptr[i+1]]`` lists its unobserved rows.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def _chol_solve(G, b, th, s):
    # in-place Cholesky of the lower triangle of G, then solve G th = b
    gmax = 0.0
    for j in range(s):
        if G[j, j] > gmax:
            gmax = G[j, j]
    for j in range(s):
        acc = G[j, j]
        for k in range(j):
            acc -= G[j, k] * G[j, k]
        # pivot threshold mirrors a 1e12 condition-number limit
        if acc <= 1e-12 * gmax:
            return False
        G[j, j] = np.sqrt(acc)
        for i in range(j + 1, s):
            acc = G[i, j]
            for k in range(j):
                acc -= G[i, k] * G[j, k]
            G[i, j] = acc / G[j, j]
    for i in range(s):
        acc = b[i]
        for k in range(i):
            acc -= G[i, k] * th[k]
        th[i] = acc / G[i, i]
    for i in range(s - 1, -1, -1):
        acc = th[i]
        for k in range(i + 1, s):
            acc -= G[k, i] * th[k]
        th[i] = acc / G[i, i]
    return True


@numba.njit(cache=True)
def residuals(D, vals, idx, ptr):
    """Least-squares residual of every packed signal against basis ``D``.

    Entries are NaN where the restricted basis is rank deficient.
    """
    m, s = D.shape
    N = ptr.shape[0] - 1
    out = np.empty(N)
    G = np.empty((s, s))
    b = np.empty(s)
    th = np.empty(s)
    for q in range(N):
        a0, a1 = ptr[q], ptr[q + 1]
        for i in range(s):
            b[i] = 0.0
            for j in range(i + 1):
                G[i, j] = 0.0
        for k in range(a0, a1):
            u = idx[k]
            yk = vals[k]
            for i in range(s):
                di = D[u, i]
                b[i] += di * yk
                for j in range(i + 1):
                    G[i, j] += di * D[u, j]
        if not _chol_solve(G, b, th, s):
            out[q] = np.nan
            continue
        acc2 = 0.0
        for k in range(a0, a1):
            u = idx[k]
            acc = vals[k]
            for i in range(s):
                acc -= D[u, i] * th[i]
            acc2 += acc * acc
        out[q] = acc2
    return out


@numba.njit(cache=True)
def _reorthonormalize(D, M):
    # modified Gram-Schmidt; positive diagonal of R matches the QR sign fix
    m, s = D.shape
    for j in range(s):
        for k in range(j):
            acc = 0.0
            for u in range(m):
                acc += D[u, k] * D[u, j]
            for u in range(m):
                D[u, j] -= acc * D[u, k]
        nrm = 0.0
        for u in range(m):
            nrm += D[u, j] * D[u, j]
        nrm = np.sqrt(nrm)
        for u in range(m):
            D[u, j] /= nrm
    for i in range(s):
        for j in range(s):
            acc = 0.0
            for u in range(m):
                acc += D[u, i] * D[u, j]
            M[i, j] = acc


@numba.njit(cache=True)
def data_sweep(D, vals, idx, cidx, ptr, cptr, members, scale, eta_t, counter, reorth_every):
    """One pass of rank-one geodesic updates over ``members``, in place.

    ``scale[q]`` is ``lam * m / |Omega_q|``; the rotation angle for a signal is
    ``||r|| ||w|| scale[q] eta_t``. The Gram matrix ``D^T D`` is tracked
    exactly so the restricted normal matrix costs only the unobserved rows.
    Returns the running update counter.
    """
    m, s = D.shape
    M = D.T @ D
    G = np.empty((s, s))
    b = np.empty(s)
    th = np.empty(s)
    w = np.empty(m)
    v = np.zeros(m)
    Dtv = np.empty(s)
    for q in members:
        a0, a1 = ptr[q], ptr[q + 1]
        c0, c1 = cptr[q], cptr[q + 1]
        for i in range(s):
            b[i] = 0.0
            for j in range(i + 1):
                G[i, j] = M[i, j]
        for k in range(c0, c1):
            u = cidx[k]
            for i in range(s):
                di = D[u, i]
                for j in range(i + 1):
                    G[i, j] -= di * D[u, j]
        for k in range(a0, a1):
            u = idx[k]
            yk = vals[k]
            for i in range(s):
                b[i] += D[u, i] * yk
        if not _chol_solve(G, b, th, s):
            return -1
        wn2 = 0.0
        for u in range(m):
            acc = 0.0
            for i in range(s):
                acc += D[u, i] * th[i]
            w[u] = acc
            wn2 += acc * acc
        rn2 = 0.0
        for k in range(a0, a1):
            rk = vals[k] - w[idx[k]]
            rn2 += rk * rk
        tn2 = 0.0
        for i in range(s):
            tn2 += th[i] * th[i]
        rn = np.sqrt(rn2)
        wn = np.sqrt(wn2)
        tn = np.sqrt(tn2)
        if rn < 1e-14 or wn < 1e-14 or tn < 1e-14:
            continue
        ang = rn * wn * scale[q] * eta_t
        cw = (np.cos(ang) - 1.0) / wn
        sr = np.sin(ang) / rn
        for i in range(s):
            th[i] /= tn
        for u in range(m):
            v[u] = cw * w[u]
        for k in range(a0, a1):
            u = idx[k]
            v[u] += sr * (vals[k] - w[u])
        vn2 = 0.0
        for i in range(s):
            Dtv[i] = 0.0
        for u in range(m):
            vu = v[u]
            vn2 += vu * vu
            for i in range(s):
                Dtv[i] += D[u, i] * vu
        for i in range(s):
            for j in range(s):
                M[i, j] += Dtv[i] * th[j] + th[i] * Dtv[j] + vn2 * th[i] * th[j]
        for u in range(m):
            vu = v[u]
            for i in range(s):
                D[u, i] += vu * th[i]
        counter += 1
        if reorth_every > 0 and counter % reorth_every == 0:
            _reorthonormalize(D, M)
    return counter
