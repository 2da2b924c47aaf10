"""Metric-constrained union-of-subspaces learning from complete data.

Data matrices are stored column-wise: an ``m x N`` array holds ``N`` signals
of dimension ``m``. Subspace labels are 0-based.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, eigh
from scipy.spatial import cKDTree

from .exceptions import (DegenerateNeighborhood, InsufficientData, NumericalFailure,
                         ShapeMismatch)
from .subspace import Subspace, SubspaceCollection, fix_signs, orthonormalize

log = logging.getLogger(__name__)


@dataclass
class McUosModel:
    """Learned union of subspaces.

    Attributes
    ----------
    subspaces : SubspaceCollection
    mean : ndarray of shape (m,)
        Training mean removed before learning.
    assignments : ndarray of shape (N,)
        0-based subspace index of every training signal.
    objective : float
        Objective value at the returned state.
    n_iter : int
    history : list of float
        Objective after every assignment and every single-subspace update
        (only filled when tracing is requested).
    assignment_history : list of ndarray
        Assignment vector produced by each assignment step.
    """

    subspaces: SubspaceCollection
    mean: np.ndarray
    assignments: np.ndarray
    objective: float
    n_iter: int = 0
    history: list = field(default_factory=list)
    assignment_history: list = field(default_factory=list)

    @property
    def bases(self):
        return self.subspaces.bases

    @property
    def n_subspaces(self):
        return self.subspaces.count

    @property
    def dim(self):
        return self.subspaces[0].dim


def _as_bases(subspaces):
    if isinstance(subspaces, SubspaceCollection):
        return subspaces.bases
    return [b.basis if isinstance(b, Subspace) else np.asarray(b, dtype=float) for b in subspaces]


def random_bases(m, s, L, rng):
    return [orthonormalize(rng.standard_normal((m, s))).basis for _ in range(L)]


def closeness(bases):
    """Sum over ordered pairs ``l != p`` of ``s - ||D_p^T D_l||_F^2``."""
    L = len(bases)
    total = 0.0
    for l in range(L):
        for p in range(l + 1, L):
            total += 2.0 * (bases[l].shape[1] - np.sum((bases[p].T @ bases[l]) ** 2))
    return total


def objective_f1(subspaces, centered_data, assignments, lam):
    """Closeness term plus lambda times the representation error.

    With ``lam = inf`` only the representation error is returned, which is
    the objective of the PCA-style variant without a closeness penalty.
    """
    D = _as_bases(subspaces)
    Y = np.asarray(centered_data, dtype=float)
    lab = np.asarray(assignments)
    if Y.shape[0] != D[0].shape[0] or lab.shape[0] != Y.shape[1]:
        raise ShapeMismatch("data, bases and assignments disagree in size")
    err = 0.0
    for l, Dl in enumerate(D):
        Yl = Y[:, lab == l]
        err += np.sum(Yl ** 2) - np.sum((Dl.T @ Yl) ** 2)
    if np.isinf(lam):
        return float(err)
    return float(closeness(D) + lam * err)


def projection_energy(subspaces, centered_data):
    """``||D_l^T y_i||^2`` for every subspace (rows) and signal (columns)."""
    Y = np.asarray(centered_data, dtype=float)
    return np.stack([np.sum((Dl.T @ Y) ** 2, axis=0) for Dl in _as_bases(subspaces)])


def assign_subspaces(subspaces, centered_data):
    """Index of the subspace capturing the most energy of each signal.

    Ties resolve to the lowest index.
    """
    D = _as_bases(subspaces)
    Y = np.asarray(centered_data, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != D[0].shape[0]:
        raise ShapeMismatch(f"data has shape {Y.shape}, expected ({D[0].shape[0]}, N)")
    return np.argmax(projection_energy(D, Y), axis=0)


def top_eigenvectors(A, k):
    """Leading ``k`` eigenvectors of a symmetric matrix, descending, sign-fixed."""
    n = A.shape[0]
    try:
        _, V = eigh(A, subset_by_index=[n - k, n - 1])
    except (LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    return fix_signs(V[:, ::-1])


def update_matrix(ell, subspaces, cluster, lam):
    D = _as_bases(subspaces)
    m = D[0].shape[0]
    if np.isinf(lam):
        return cluster @ cluster.T
    A = np.zeros((m, m))
    for p, Dp in enumerate(D):
        if p != ell:
            A += Dp @ Dp.T
    if cluster.shape[1]:
        A += 0.5 * lam * (cluster @ cluster.T)
    return A


def update_subspace(ell, subspaces, centered_data, assignments, lam, s=None):
    """Closed-form update of one basis with all others held fixed.

    Returns the top-``s`` eigenvectors of
    ``sum_{p != ell} D_p D_p^T + (lam / 2) Y_ell Y_ell^T``.
    An empty cluster leaves only the closeness part.
    """
    D = _as_bases(subspaces)
    s = D[ell].shape[1] if s is None else s
    Yl = np.asarray(centered_data)[:, np.asarray(assignments) == ell]
    return top_eigenvectors(update_matrix(ell, D, Yl, lam), s)


def _check_data(Y):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ShapeMismatch("data must be a 2-D m x N array")
    if not np.all(np.isfinite(Y)):
        raise ShapeMismatch("data contains non-finite values")
    return Y


def _micusal_single(Yc, D, lam, max_outer_iters, rel_tol, trace):
    L = len(D)
    D = [np.array(b, dtype=float) for b in D]
    history, lab_hist = [], []
    prev = np.inf
    F = np.inf
    lab = None
    it = 0
    while it < max_outer_iters:
        it += 1
        lab = assign_subspaces(D, Yc)
        lab_hist.append(lab)
        if trace:
            history.append(objective_f1(D, Yc, lab, lam))
        for l in range(L):
            D[l] = update_subspace(l, D, Yc, lab, lam)
            if trace:
                history.append(objective_f1(D, Yc, lab, lam))
        F = objective_f1(D, Yc, lab, lam)
        if np.isfinite(prev) and prev - F <= rel_tol * abs(prev):
            break
        prev = F
    return D, lab, F, it, history, lab_hist


def micusal(Y, L, s, lam=2.0, max_outer_iters=100, rel_tol=1e-6, restarts=1,
            rng_seed=None, init=None, trace=False):
    """Learn ``L`` subspaces of dimension ``s`` from complete data.

    Alternates nearest-subspace assignment and closed-form basis updates
    until the relative objective decrease drops below ``rel_tol``. Over
    several random restarts the model with the smallest objective is kept.

    Parameters
    ----------
    Y : ndarray of shape (m, N)
    L, s : int
    lam : float
        Weight of the representation term; ``np.inf`` drops the closeness
        penalty.
    init : list of ndarray, optional
        Starting bases. When given, ``restarts`` is ignored.
    trace : bool
        Record the objective after every step.

    Returns
    -------
    McUosModel
    """
    Y = _check_data(Y)
    m, N = Y.shape
    if N <= s:
        raise InsufficientData(f"need more than s={s} signals, got {N}")
    if not 0 < s < m:
        raise ShapeMismatch(f"subspace dimension must satisfy 0 < s < m, got s={s}, m={m}")
    if not lam > 0:
        raise ValueError("lam must be positive")
    mean = Y.mean(axis=1)
    Yc = Y - mean[:, None]
    rng = np.random.default_rng(rng_seed)
    starts = [init] if init is not None else [random_bases(m, s, L, rng) for _ in range(max(1, restarts))]
    best = None
    for D0 in starts:
        D0 = _as_bases(D0)
        res = _micusal_single(Yc, D0, lam, max_outer_iters, rel_tol, trace)
        if best is None or res[2] < best[2]:
            best = res
    D, lab, F, it, history, lab_hist = best
    return McUosModel(SubspaceCollection([Subspace(d, check=False) for d in D]), mean, lab,
                      float(F), it, history, lab_hist)


def estimate_dimension(points, k1=6, k2=10):
    """Maximum-likelihood intrinsic dimension from nearest-neighbour distances.

    For each point and each ``k0`` in ``k1..k2`` the estimate is the inverse
    of ``(1/(k0-2)) sum_{a<k0} log(G_k0 / G_a)``, with ``G_a`` the distance
    to the ``a``-th nearest neighbour. Estimates are averaged over points,
    then over ``k0``.

    Parameters
    ----------
    points : ndarray of shape (m, n)
        One point per column.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ShapeMismatch("points must be an m x n array")
    n = X.shape[1]
    if k1 < 3 or k2 < k1:
        raise ValueError("need 3 <= k1 <= k2")
    if n <= k2:
        raise InsufficientData(f"need more than k2={k2} points, got {n}")
    dist, _ = cKDTree(X.T).query(X.T, k=k2 + 1)
    G = dist[:, 1:]
    if np.any(G <= 0):
        raise DegenerateNeighborhood("duplicate points give a zero neighbour distance")
    logG = np.log(G)
    est = []
    for k0 in range(k1, k2 + 1):
        inv = np.sum(logG[:, k0 - 1:k0] - logG[:, :k0 - 1], axis=1) / (k0 - 2)
        est.append(np.mean(1.0 / inv))
    return float(np.mean(est))


def _pairwise_distance(D):
    L = len(D)
    dist = np.full((L, L), np.inf)
    for l in range(L):
        for p in range(l + 1, L):
            s = D[l].shape[1]
            dist[l, p] = np.sqrt(max(s - np.sum((D[l].T @ D[p]) ** 2), 0.0))
    return dist


def merge_subspaces(D, Yc, lab, lam, eps_min, s_max):
    """Greedily merge the closest pair while its normalized distance is small.

    ``eps_min = 0`` disables merging, even of identical subspaces.

    Returns the surviving bases and the merged labels.
    """
    D = list(D)
    lab = np.array(lab)
    while eps_min > 0 and len(D) > 1:
        dist = _pairwise_distance(D)
        l, p = np.unravel_index(np.argmin(dist), dist.shape)
        if dist[l, p] / np.sqrt(s_max) > eps_min:
            break
        lab[lab == p] = l
        others = [D[q] for q in range(len(D)) if q not in (l, p)]
        A = np.zeros((Yc.shape[0],) * 2)
        for Dq in others:
            A += Dq @ Dq.T
        Yl = Yc[:, lab == l]
        A += 0.5 * lam * (Yl @ Yl.T)
        D[l] = top_eigenvectors(A, s_max)
        del D[p]
        lab[lab > p] -= 1
        log.debug("merged subspaces %d and %d (distance %.4f)", l, p, dist[l, p])
    return D, lab


def amicusal(Y, L_max, s_max, lam=2.0, k1=6, k2=10, eps_min=0.1, max_outer_iters=100,
             rel_tol=1e-6, restarts=1, rng_seed=None, trace=False):
    """Learn a union of subspaces with unknown count and dimension.

    Starts from ``L_max`` random bases of dimension ``s_max``, prunes
    subspaces that attract no signals, merges pairs whose normalized
    distance is at most ``eps_min``, estimates the common dimension from the
    projected clusters and finishes with :func:`micusal` from the trimmed
    bases.
    """
    Y = _check_data(Y)
    m, N = Y.shape
    if not 0 < s_max < m:
        raise ShapeMismatch(f"s_max must satisfy 0 < s_max < m, got {s_max}")
    if N <= s_max:
        raise InsufficientData(f"need more than s_max={s_max} signals, got {N}")
    if not 0 <= eps_min < 1:
        raise ValueError("eps_min must lie in [0, 1)")
    if k1 < 3 or k2 < k1:
        raise ValueError("need 3 <= k1 <= k2")
    mean = Y.mean(axis=1)
    Yc = Y - mean[:, None]
    rng = np.random.default_rng(rng_seed)

    best = None
    for _ in range(max(1, restarts)):
        D = random_bases(m, s_max, L_max, rng)
        history = []
        prev = np.inf
        it = 0
        while it < max_outer_iters:
            it += 1
            lab = assign_subspaces(D, Yc)
            active = [l for l in range(len(D)) if np.any(lab == l)]
            if len(active) < len(D):
                remap = np.full(len(D), -1)
                remap[active] = np.arange(len(active))
                D = [D[l] for l in active]
                lab = remap[lab]
            if trace:
                history.append(objective_f1(D, Yc, lab, lam))
            for l in range(len(D)):
                D[l] = update_subspace(l, D, Yc, lab, lam)
                if trace:
                    history.append(objective_f1(D, Yc, lab, lam))
            F = objective_f1(D, Yc, lab, lam)
            if np.isfinite(prev) and prev - F <= rel_tol * abs(prev):
                break
            prev = F
        if best is None or F < best[2]:
            best = (D, lab, F, history)
    D, lab, _, history = best

    D, lab = merge_subspaces(D, Yc, lab, lam, eps_min, s_max)
    lab = assign_subspaces(D, Yc)
    s_hat = []
    for l, Dl in enumerate(D):
        proj = Dl @ (Dl.T @ Yc[:, lab == l])
        if proj.shape[1] > k2:
            s_hat.append(estimate_dimension(proj, k1, k2))
        else:
            log.warning("cluster %d has %d members; skipped in dimension estimate", l, proj.shape[1])
    s = int(np.clip(np.rint(max(s_hat)) if s_hat else s_max, 1, s_max))
    init = [Dl[:, :s] for Dl in D]
    model = micusal(Y, len(D), s, lam, max_outer_iters, rel_tol, init=init, trace=trace)
    model.history = history + model.history
    return model
