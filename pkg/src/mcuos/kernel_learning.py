"""Union-of-subspaces learning in a kernel feature space.

Every feature-space subspace is stored implicitly as a coefficient matrix
``E_l`` over the centered feature images of its cluster ``c_l``, so only
Gram-matrix entries are ever needed.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cholesky, eigh, solve_triangular

from .exceptions import InsufficientData, NumericalFailure, ShapeMismatch
from .kernels import (EstimatedGram, KernelSpec, center_matrix, centered_cross_vector,
                      centered_self_value, estimated_cross_kernel, estimated_gram_missing,
                      gram)
from .subspace import fix_signs

log = logging.getLogger(__name__)

_RANK_REL = 1e-12


@dataclass
class KernelModel:
    """Learned union of subspaces in feature space.

    Attributes
    ----------
    spec : KernelSpec
    train : ndarray of shape (m, N) or list of ObservedSignal
    gram_raw : ndarray of shape (N, N)
        Uncentered (possibly estimated and repaired) Gram matrix.
    gram : ndarray of shape (N, N)
        Centered Gram matrix.
    clusters : list of ndarray of int
    coefficients : list of ndarray, each of shape (N_l, s_l)
    assignments : ndarray of shape (N,)
    s, lam : subspace dimension and representation weight
    objective : float
    history : list of (str, float)
        Objective after each stage; the stage is ``"assign"``, ``"reinit"``
        or ``"update"``.
    """

    spec: KernelSpec
    train: object
    gram_raw: np.ndarray
    gram: np.ndarray
    clusters: list
    coefficients: list
    assignments: np.ndarray
    s: int
    lam: float
    objective: float = np.nan
    n_iter: int = 0
    psd_repaired: bool = False
    history: list = field(default_factory=list)
    assignment_history: list = field(default_factory=list)

    @property
    def n_subspaces(self):
        return len(self.clusters)

    @property
    def missing(self):
        return not isinstance(self.train, np.ndarray)


# building blocks -----------------------------------------------------------

def _spectral_coefficients(K, s):
    """Top-``s`` kernel-PCA coefficients ``U Sigma^{-1/2}`` of a cluster block."""
    if K.shape[0] == 0:
        return np.zeros((0, 0))
    w, U = eigh(K)
    w, U = w[::-1], U[:, ::-1]
    keep = min(s, int(np.sum(w > _RANK_REL * max(w[0], 0.0))) if w[0] > 0 else 0)
    if keep < s:
        log.warning("cluster of size %d supports only %d of %d dimensions", K.shape[0], keep, s)
    return fix_signs(U[:, :keep]) / np.sqrt(w[:keep])


def kernel_pca_coefficients(Gc, cluster, s):
    cluster = np.asarray(cluster, dtype=int)
    return _spectral_coefficients(Gc[np.ix_(cluster, cluster)], s)


def gkiop(Gc, L, s, rng=None):
    """Greedy initial clusters with maximal summed centered affinity.

    For each subspace an unused index is drawn at random, then the unused
    index with the largest summed centered kernel value to the current
    cluster is added until the cluster holds ``s`` points.

    Returns
    -------
    clusters : list of ndarray
    coefficients : list of ndarray
        ``U Sigma^{-1/2}`` from the eigendecomposition of each cluster block.
    """
    Gc = np.asarray(Gc, dtype=float)
    N = Gc.shape[0]
    if N < L * s:
        raise InsufficientData(f"need at least L*s={L * s} points, got {N}")
    rng = np.random.default_rng(rng)
    unused = np.ones(N, dtype=bool)
    clusters, coeffs = [], []
    for _ in range(L):
        seed = int(rng.choice(np.flatnonzero(unused)))
        c = [seed]
        unused[seed] = False
        affinity = Gc[:, seed].copy()
        while len(c) < s:
            cand = np.where(unused, affinity, -np.inf)
            i = int(np.argmax(cand))
            c.append(i)
            unused[i] = False
            affinity += Gc[:, i]
        c = np.array(c)
        clusters.append(c)
        coeffs.append(kernel_pca_coefficients(Gc, c, s))
    return clusters, coeffs


def assignment_residuals(Gc, clusters, coeffs, cols=None):
    """``g~_ii - ||E_l^T G~[c_l, i]||^2`` for each subspace (rows) and point."""
    cols = np.arange(Gc.shape[0]) if cols is None else np.asarray(cols)
    diag = Gc[cols, cols]
    out = np.empty((len(clusters), cols.shape[0]))
    for l, (c, E) in enumerate(zip(clusters, coeffs)):
        if c.size == 0 or E.shape[1] == 0:
            out[l] = diag
            continue
        P = E.T @ Gc[np.ix_(c, cols)]
        out[l] = diag - np.sum(P ** 2, axis=0)
    return out


def feature_distance_sq(Gc, c_l, E_l, c_p, E_p, s):
    """Squared subspace distance in feature space from Gram entries only."""
    if c_l.size == 0 or c_p.size == 0:
        return float(s)
    B = E_l.T @ Gc[np.ix_(c_l, c_p)] @ E_p
    return float(s - np.sum(B ** 2))


def objective_f3(Gc, clusters, coeffs, assignments, lam, s):
    """Feature-space closeness plus lambda times the representation error."""
    L = len(clusters)
    clo = 0.0
    for l in range(L):
        for p in range(l + 1, L):
            clo += 2.0 * feature_distance_sq(Gc, clusters[l], coeffs[l], clusters[p], coeffs[p], s)
    R = assignment_residuals(Gc, clusters, coeffs)
    lab = np.asarray(assignments)
    return float(clo + lam * np.sum(R[lab, np.arange(lab.shape[0])]))


def whitened_top_eigenvectors(A, K, s):
    """Top-``s`` solutions of ``A b = z K b`` normalized so ``E^T K E = I``.

    Uses a Cholesky factor of ``K``; when ``K`` is singular or badly
    conditioned, whitening is restricted to its numerical range.
    """
    n = K.shape[0]
    try:
        R = cholesky(K, lower=False)
        piv = np.diag(R) ** 2
        if piv.min() < _RANK_REL * piv.max():
            raise LinAlgError("ill-conditioned")
        X = solve_triangular(R, solve_triangular(R, A.T, trans="T").T, trans="T")
        X = 0.5 * (X + X.T)
        w, V = eigh(X, subset_by_index=[max(n - s, 0), n - 1])
        V = fix_signs(V[:, ::-1])
        return solve_triangular(R, V)
    except LinAlgError:
        pass
    try:
        w, U = eigh(K)
    except LinAlgError as exc:
        raise NumericalFailure(f"whitening failed: {exc}") from exc
    keep = w > _RANK_REL * max(w.max(), 0.0)
    if not keep.any():
        log.warning("cluster Gram block is numerically zero; subspace left empty")
        return np.zeros((n, 0))
    W = U[:, keep] / np.sqrt(w[keep])
    X = W.T @ A @ W
    X = 0.5 * (X + X.T)
    r = X.shape[0]
    k = min(s, r)
    _, V = eigh(X, subset_by_index=[r - k, r - 1])
    return W @ fix_signs(V[:, ::-1])


def kernel_subspace_update(Gc, clusters, coeffs, ell, lam, s):
    """Closed-form update of ``E_ell`` with all other subspaces fixed."""
    c = clusters[ell]
    if c.size == 0:
        return coeffs[ell]
    K = Gc[np.ix_(c, c)]
    if np.isinf(lam):
        A = K @ K
    else:
        A = 0.5 * lam * (K @ K)
        for p, (cp, Ep) in enumerate(zip(clusters, coeffs)):
            if p == ell or cp.size == 0 or Ep.shape[1] == 0:
                continue
            B = Gc[np.ix_(c, cp)] @ Ep
            A += B @ B.T
    A = 0.5 * (A + A.T)
    return whitened_top_eigenvectors(A, K, min(s, c.size))


def carry_coefficients(Gc, old_c, old_E, new_c, s):
    """Represent an existing subspace over a new cluster.

    The old subspace is projected onto the span of the new cluster's
    feature images and re-orthonormalized there.
    """
    if new_c.size == 0:
        return np.zeros((0, 0))
    if old_c.size == 0 or old_E.shape[1] == 0:
        return kernel_pca_coefficients(Gc, new_c, s)
    K = Gc[np.ix_(new_c, new_c)]
    w, U = eigh(K)
    keep = w > _RANK_REL * max(w.max(), 0.0)
    if not keep.any():
        return np.zeros((new_c.size, 0))
    W = U[:, keep] / np.sqrt(w[keep])
    C = W.T @ Gc[np.ix_(new_c, old_c)] @ old_E
    P, sv, _ = np.linalg.svd(C, full_matrices=False)
    rank = int(np.sum(sv > 1e-10 * max(sv.max(), 1e-300)))
    if rank == C.shape[1]:
        Q, Rq = np.linalg.qr(C)
        Q = Q * np.sign(np.where(np.diag(Rq) == 0, 1.0, np.diag(Rq)))
    else:
        log.warning("carried subspace lost %d dimensions", C.shape[1] - rank)
        Q = P[:, :rank]
    return W @ Q


# learning ------------------------------------------------------------------

def _learn(spec, train, G_raw, L, s, lam, max_outer_iters, inner_max_sweeps, rel_tol, rng,
           reinit, trace, psd_repaired=False, init=None):
    N = G_raw.shape[0]
    if N < L * s:
        raise InsufficientData(f"need at least L*s={L * s} points, got {N}")
    if reinit not in ("pca", "carry"):
        raise ValueError("reinit must be 'pca' or 'carry'")
    Gc = center_matrix(G_raw)
    clusters, coeffs = gkiop(Gc, L, s, rng) if init is None else init
    clusters = [np.asarray(c, dtype=int) for c in clusters]
    coeffs = [np.asarray(E, dtype=float) for E in coeffs]
    lab = None
    history, lab_hist = [], []
    it = 0
    F = np.nan
    while it < max_outer_iters:
        new_lab = np.argmin(assignment_residuals(Gc, clusters, coeffs), axis=0)
        if trace:
            history.append(("assign", objective_f3(Gc, clusters, coeffs, new_lab, lam, s)))
        if lab is not None and np.array_equal(new_lab, lab):
            break
        it += 1
        lab = new_lab
        lab_hist.append(lab)
        new_clusters = [np.flatnonzero(lab == l) for l in range(L)]
        for l, c in enumerate(new_clusters):
            if c.size < s:
                log.warning("subspace %d has %d members, fewer than s=%d", l, c.size, s)
        if reinit == "pca":
            coeffs = [kernel_pca_coefficients(Gc, c, s) for c in new_clusters]
        else:
            coeffs = [carry_coefficients(Gc, oc, oE, nc, s)
                      for oc, oE, nc in zip(clusters, coeffs, new_clusters)]
        clusters = new_clusters
        F = objective_f3(Gc, clusters, coeffs, lab, lam, s)
        if trace:
            history.append(("reinit", F))
        for _ in range(inner_max_sweeps):
            prev = F
            for l in range(L):
                coeffs[l] = kernel_subspace_update(Gc, clusters, coeffs, l, lam, s)
                if trace:
                    history.append(("update", objective_f3(Gc, clusters, coeffs, lab, lam, s)))
            F = objective_f3(Gc, clusters, coeffs, lab, lam, s)
            if abs(prev - F) <= rel_tol * max(abs(prev), 1e-300):
                break
    if lab is None:
        lab = np.argmin(assignment_residuals(Gc, clusters, coeffs), axis=0)
    F = objective_f3(Gc, clusters, coeffs, lab, lam, s)
    return KernelModel(spec, train, G_raw, Gc, clusters, coeffs, lab, s, lam, F, it,
                       psd_repaired, history, lab_hist)


def _best_of(restarts, init, run):
    """Call ``run`` once per start and keep the model with the smallest objective."""
    best = None
    for _ in range(1 if init is not None else max(1, restarts)):
        model = run()
        if best is None or model.objective < best.objective:
            best = model
    return best


def mckusal(Y, spec, L, s, lam=4.0, max_outer_iters=100, inner_max_sweeps=20, rel_tol=1e-6,
            rng_seed=None, reinit="pca", trace=False, init=None, restarts=1):
    """Learn ``L`` feature-space subspaces of dimension ``s`` from complete data.

    Parameters
    ----------
    Y : ndarray of shape (m, N)
    spec : KernelSpec
    reinit : {"pca", "carry"}
        How subspaces are re-expressed over their new clusters after each
        assignment. ``"pca"`` restarts from the kernel-PCA basis of the
        cluster; ``"carry"`` projects the previous subspace onto the new
        cluster span.
    init : tuple of (clusters, coefficients), optional
        Replaces the greedy initialization.
    restarts : int, default=1
        Number of greedy initializations, each from a different random
        seed index; the model with the smallest objective is returned.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or not np.all(np.isfinite(Y)):
        raise ShapeMismatch("Y must be a finite m x N array")
    G = gram(spec, Y).values
    rng = np.random.default_rng(rng_seed)
    return _best_of(restarts, init, lambda: _learn(
        spec, Y, G, L, s, lam, max_outer_iters, inner_max_sweeps, rel_tol, rng, reinit, trace,
        init=init))


def rmckusal(signals, spec, L, s, lam=4.0, delta_min=1e-6, max_outer_iters=100,
             inner_max_sweeps=20, rel_tol=1e-6, rng_seed=None, reinit="pca", trace=False,
             restarts=1):
    """Kernel union-of-subspaces learning from partially observed signals.

    Kernel values are estimated from pairwise overlaps of the observed
    coordinates and the Gram matrix is repaired to be positive definite
    before learning proceeds as in :func:`mckusal`.
    """
    if not signals:
        raise InsufficientData("no signals supplied")
    est = estimated_gram_missing(spec, signals, delta_min)
    rng = np.random.default_rng(rng_seed)
    train = list(signals)
    return _best_of(restarts, None, lambda: _learn(
        spec, train, est.values, L, s, lam, max_outer_iters, inner_max_sweeps, rel_tol, rng,
        reinit, trace, est.psd_repaired))


# queries -------------------------------------------------------------------

def cross_kernel(model, z):
    """Uncentered kernel values between training points and new signals.

    ``z`` is an array of shape (m,) or (m, q), or an ObservedSignal (list).
    """
    if model.missing:
        from .missing import ObservedSignal
        zs = z if isinstance(z, (list, tuple)) else [z]
        zs = [q if isinstance(q, ObservedSignal) else ObservedSignal.from_nan(q) for q in zs]
        k = estimated_cross_kernel(model.spec, model.train, zs)
        return k[:, 0] if not isinstance(z, (list, tuple)) else k
    z = np.asarray(z, dtype=float)
    k = model.spec(model.train, z)
    return k[:, 0] if z.ndim == 1 else k


def _self_kernel(model, z):
    from .missing import ObservedSignal
    if isinstance(z, (list, tuple)):
        return np.array([_self_kernel(model, q) for q in z])
    if isinstance(z, ObservedSignal):
        return model.spec.self_value(z.to_dense()[:, None] * np.sqrt(z.ambient_dim / max(len(z), 1)))[0]
    z = np.asarray(z, dtype=float)
    zz = z[:, None] if z.ndim == 1 else z
    if np.isnan(zz).any():
        n_obs = np.sum(~np.isnan(zz), axis=0)
        zz = np.nan_to_num(zz) * np.sqrt(zz.shape[0] / n_obs)
    v = model.spec.self_value(zz)
    return v[0] if z.ndim == 1 else v


def kernel_scores(model, z):
    """Centered representation residual of new signal(s) for every subspace."""
    k = cross_kernel(model, z)
    kzz = _self_kernel(model, z)
    G = model.gram_raw
    base = centered_self_value(kzz, k, G)
    single = k.ndim == 1
    kk = k[:, None] if single else k
    out = np.empty((model.n_subspaces, kk.shape[1]))
    for l, (c, E) in enumerate(zip(model.clusters, model.coefficients)):
        if c.size == 0 or E.shape[1] == 0:
            out[l] = base
            continue
        psi = centered_cross_vector(kk, G, c)
        out[l] = base - np.sum((E.T @ psi) ** 2, axis=0)
    return out[:, 0] if single else out


def kernel_assign(model, z):
    """Subspace index for a training index (int) or a new signal."""
    if isinstance(z, (int, np.integer)):
        R = assignment_residuals(model.gram, model.clusters, model.coefficients, [int(z)])
        return int(np.argmin(R[:, 0]))
    scores = kernel_scores(model, z)
    return np.argmin(scores, axis=0) if scores.ndim == 2 else int(np.argmin(scores))
