"""Union-of-subspaces learning from partially observed signals.

Each signal is seen only on an index set; learning alternates a
least-squares subspace assignment with incremental geodesic descent on the
Grassmann manifold.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solve

from . import _fast
from ._tol import COND_MAX
from .exceptions import (InsufficientData, NumericalFailure, RankDeficient,
                         ShapeMismatch)
from .linear import McUosModel, closeness, random_bases
from .subspace import Subspace, SubspaceCollection, orthonormalize

log = logging.getLogger(__name__)


class ObservedSignal:
    """Signal known only on a sorted set of coordinates.

    Parameters
    ----------
    values : array-like of shape (n_obs,)
    omega : array-like of int, shape (n_obs,)
        Strictly increasing 0-based coordinate indices.
    ambient_dim : int
    """

    __slots__ = ("values", "omega", "ambient_dim")

    def __init__(self, values, omega, ambient_dim):
        values = np.asarray(values, dtype=float).ravel()
        omega = np.asarray(omega, dtype=np.int64).ravel()
        if values.shape != omega.shape:
            raise ShapeMismatch("values and omega must have equal length")
        if omega.size and (omega[0] < 0 or omega[-1] >= ambient_dim or np.any(np.diff(omega) <= 0)):
            raise ShapeMismatch("omega must be strictly increasing indices within [0, m)")
        values.setflags(write=False)
        omega.setflags(write=False)
        self.values = values
        self.omega = omega
        self.ambient_dim = int(ambient_dim)

    @classmethod
    def from_full(cls, x, omega=None):
        x = np.asarray(x, dtype=float)
        omega = np.arange(x.shape[0]) if omega is None else np.sort(np.asarray(omega))
        return cls(x[omega], omega, x.shape[0])

    @classmethod
    def from_nan(cls, x):
        """Observed signal from a vector whose missing entries are NaN."""
        x = np.asarray(x, dtype=float)
        omega = np.flatnonzero(~np.isnan(x))
        return cls(x[omega], omega, x.shape[0])

    def to_dense(self, fill=0.0):
        out = np.full(self.ambient_dim, fill)
        out[self.omega] = self.values
        return out

    def __len__(self):
        return self.omega.shape[0]

    def __repr__(self):
        return f"ObservedSignal(m={self.ambient_dim}, observed={len(self)})"


def signals_from_array(Y, masks=None):
    """Wrap the columns of ``Y`` as observed signals.

    ``masks`` is a list of index sets; without it NaN entries mark missing
    values.
    """
    Y = np.asarray(Y, dtype=float)
    if masks is None:
        return [ObservedSignal.from_nan(Y[:, i]) for i in range(Y.shape[1])]
    out = []
    for i, om in enumerate(masks):
        om = np.sort(np.asarray(om))
        om = om[~np.isnan(Y[om, i])]
        out.append(ObservedSignal(Y[om, i], om, Y.shape[0]))
    return out


@dataclass
class PackedSignals:
    vals: np.ndarray
    idx: np.ndarray
    ptr: np.ndarray
    cidx: np.ndarray
    cptr: np.ndarray
    m: int

    @property
    def n_signals(self):
        return self.ptr.shape[0] - 1

    @property
    def n_observed(self):
        return np.diff(self.ptr)


def pack_signals(signals):
    if not signals:
        raise InsufficientData("no signals supplied")
    m = signals[0].ambient_dim
    if any(sig.ambient_dim != m for sig in signals):
        raise ShapeMismatch("all signals must share the ambient dimension")
    counts = np.array([len(sig) for sig in signals])
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    cptr = np.concatenate([[0], np.cumsum(m - counts)]).astype(np.int64)
    full = np.arange(m)
    comp = [np.setdiff1d(full, sig.omega, assume_unique=True) for sig in signals]
    return PackedSignals(
        np.concatenate([sig.values for sig in signals]).astype(float),
        np.concatenate([sig.omega for sig in signals]).astype(np.int64),
        ptr,
        np.concatenate(comp).astype(np.int64) if comp else np.zeros(0, np.int64),
        cptr,
        m,
    )


def _basis(sub):
    return sub.basis if isinstance(sub, Subspace) else np.asarray(sub, dtype=float)


def _restricted_solve(D, sig):
    DO = D[sig.omega]
    G = DO.T @ DO
    if np.linalg.cond(G) > COND_MAX:
        raise RankDeficient("basis restricted to the observed rows is rank deficient")
    try:
        theta = solve(G, DO.T @ sig.values, assume_a="pos")
    except LinAlgError as exc:
        raise RankDeficient(str(exc)) from exc
    return DO, theta


def residual_on_omega(sub, sig):
    """Squared least-squares residual of the observed entries against the subspace."""
    D = _basis(sub)
    if sig.ambient_dim != D.shape[0]:
        raise ShapeMismatch("signal and subspace differ in ambient dimension")
    DO, theta = _restricted_solve(D, sig)
    r = sig.values - DO @ theta
    return float(r @ r)


def closeness_gradient(ell, bases):
    """``2 (I - D D^T) A D`` with ``A`` the sum of the other projectors."""
    D = [_basis(b) for b in bases]
    Dl = D[ell]
    AD = np.zeros_like(Dl)
    for p, Dp in enumerate(D):
        if p != ell:
            AD += Dp @ (Dp.T @ Dl)
    return 2.0 * (AD - Dl @ (Dl.T @ AD))


def geodesic_step(D, Delta, eta_t):
    """Move ``D`` along the Grassmann geodesic with direction ``Delta``."""
    try:
        U, S, Vt = np.linalg.svd(Delta, full_matrices=False)
    except LinAlgError as exc:
        raise NumericalFailure(f"SVD failed: {exc}") from exc
    return (D @ Vt.T) * np.cos(S * eta_t) @ Vt + (U * np.sin(S * eta_t)) @ Vt


def grassmann_closeness_step(ell, bases, eta_t):
    """One geodesic step of basis ``ell`` towards the other subspaces."""
    D = [_basis(b) for b in bases]
    return geodesic_step(D[ell], closeness_gradient(ell, D), eta_t)


def grouse_style_data_step(sub, sig, step):
    """Rank-one geodesic update fitting one partially observed signal.

    Parameters
    ----------
    sub : Subspace or ndarray of shape (m, s)
    sig : ObservedSignal
    step : float
        Multiplier on ``||r|| ||w||`` giving the rotation angle; the learner
        passes ``lam * m / |Omega| * eta_t``.

    Returns
    -------
    ndarray of shape (m, s)
        Updated basis. Unchanged when the residual or the fitted vector
        vanishes.
    """
    D = _basis(sub)
    DO, theta = _restricted_solve(D, sig)
    w = D @ theta
    r = np.zeros(D.shape[0])
    r[sig.omega] = sig.values - DO @ theta
    rn, wn, tn = np.linalg.norm(r), np.linalg.norm(w), np.linalg.norm(theta)
    if rn < 1e-14 or wn < 1e-14 or tn < 1e-14:
        return D.copy()
    ang = rn * wn * step
    v = (np.cos(ang) - 1.0) * w / wn + np.sin(ang) * r / rn
    return D + np.outer(v, theta / tn)


def _residual_matrix(D, packed):
    R = np.stack([_fast.residuals(np.ascontiguousarray(Dl), packed.vals, packed.idx, packed.ptr)
                  for Dl in D])
    if np.isnan(R).any():
        raise RankDeficient("a subspace restricted to some observed set is rank deficient")
    return R


def objective_f2(bases, signals, assignments, lam):
    """Closeness plus lambda times the rescaled observed-entry residuals."""
    packed = signals if isinstance(signals, PackedSignals) else pack_signals(signals)
    D = [_basis(b) for b in bases]
    R = _residual_matrix(D, packed)
    lab = np.asarray(assignments)
    scale = packed.m / packed.n_observed
    return float(closeness(D) + lam * np.sum(scale * R[lab, np.arange(lab.shape[0])]))


def _rmicusal_single(packed, D, lam, eta, inner_iters, max_outer_iters, reorth_every):
    L = len(D)
    s = D[0].shape[1]
    m = packed.m
    N = packed.n_signals
    scale = lam * m / packed.n_observed
    D = [np.array(b, dtype=float) for b in D]
    lab_prev = None
    lab_hist = []
    it = 0
    while True:
        R = _residual_matrix(D, packed)
        lab = np.argmin(R, axis=0)
        lab_hist.append(lab)
        F = closeness(D) + lam * np.sum(m / packed.n_observed * R[lab, np.arange(N)])
        if (lab_prev is not None and np.array_equal(lab, lab_prev)) or it >= max_outer_iters:
            break
        lab_prev = lab
        it += 1
        for l in range(L):
            members = np.flatnonzero(lab == l).astype(np.int64)
            A = np.zeros((m, m))
            for p in range(L):
                if p != l:
                    A += D[p] @ D[p].T
            Dl = D[l].copy()
            counter = 0
            for t in range(1, inner_iters + 1):
                eta_t = eta / t
                AD = A @ Dl
                Dl = geodesic_step(Dl, 2.0 * (AD - Dl @ (Dl.T @ AD)), eta_t)
                Dl = np.ascontiguousarray(Dl)
                if members.size:
                    counter = _fast.data_sweep(Dl, packed.vals, packed.idx, packed.cidx,
                                               packed.ptr, packed.cptr, members, scale,
                                               eta_t, counter, reorth_every)
                    if counter < 0:
                        raise RankDeficient("restricted basis became rank deficient during descent")
            D[l] = orthonormalize(Dl).basis
    return D, lab, float(F), it, lab_hist


def rmicusal(signals, L, s, lam=2.0, eta=0.1, inner_iters=100, max_outer_iters=100,
             restarts=1, rng_seed=None, init=None, reorth_every=50):
    """Learn ``L`` subspaces of dimension ``s`` from partially observed signals.

    Each outer iteration assigns every signal to the subspace with the
    smallest observed-entry residual, then refines each basis with
    ``inner_iters`` sweeps. A sweep is one geodesic step towards the other
    subspaces followed by one rank-one data step per member signal, using
    the decaying step ``eta / t``. Iteration stops once the assignments
    repeat.

    Parameters
    ----------
    signals : list of ObservedSignal
    L, s : int
    lam, eta : float
    reorth_every : int
        Re-orthonormalize after this many rank-one updates.

    Returns
    -------
    McUosModel
        ``mean`` is zero: partially observed signals are not centered.
    """
    if not signals:
        raise InsufficientData("no signals supplied")
    packed = pack_signals(signals)
    m = packed.m
    if not 0 < s < m:
        raise ShapeMismatch(f"subspace dimension must satisfy 0 < s < m, got s={s}")
    if np.any(packed.n_observed <= s):
        raise InsufficientData(f"every signal needs more than s={s} observed entries")
    if not eta > 0:
        raise ValueError("eta must be positive")
    rng = np.random.default_rng(rng_seed)
    starts = [init] if init is not None else [random_bases(m, s, L, rng) for _ in range(max(1, restarts))]
    best = None
    for D0 in starts:
        D0 = [_basis(b) for b in D0]
        res = _rmicusal_single(packed, D0, lam, eta, inner_iters, max_outer_iters, reorth_every)
        if best is None or res[2] < best[2]:
            best = res
    D, lab, F, it, lab_hist = best
    return McUosModel(SubspaceCollection([Subspace(d, check=False) for d in D]), np.zeros(m),
                      lab, F, it, [], lab_hist)
