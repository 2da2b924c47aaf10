"""Orthonormal-basis subspaces, the Grassmann distance and subspace matching."""
import numpy as np

from ._tol import ORTHO_TOL, RANK_TOL
from .exceptions import RankDeficient, ShapeMismatch


def fix_signs(Q):
    """Flip columns so the first nonzero entry of each is positive."""
    Q = np.array(Q, dtype=float, copy=True)
    if Q.size == 0:
        return Q
    mag = np.abs(Q)
    nz = mag > 1e-12 * np.maximum(mag.max(axis=0), 1e-300)
    first = np.argmax(nz, axis=0)
    sgn = np.sign(Q[first, np.arange(Q.shape[1])])
    sgn[sgn == 0] = 1.0
    return Q * sgn


class Subspace:
    """A point on the Grassmann manifold stored as an orthonormal basis.

    Parameters
    ----------
    basis : ndarray of shape (m, s)
        Matrix with orthonormal columns.
    check : bool, default=True
        Verify orthonormality to ``1e-10``.
    """

    __slots__ = ("_basis",)

    def __init__(self, basis, check=True):
        B = np.array(basis, dtype=float)
        if B.ndim != 2 or B.shape[1] < 1 or B.shape[1] > B.shape[0]:
            raise ShapeMismatch(f"basis must be m x s with 1 <= s <= m, got {B.shape}")
        if check:
            err = np.abs(B.T @ B - np.eye(B.shape[1])).max()
            if err > ORTHO_TOL:
                raise ValueError(f"basis columns are not orthonormal (max error {err:.2e})")
        B.setflags(write=False)
        self._basis = B

    @property
    def basis(self):
        return self._basis

    @property
    def ambient_dim(self):
        return self._basis.shape[0]

    @property
    def dim(self):
        return self._basis.shape[1]

    def __repr__(self):
        return f"Subspace(m={self.ambient_dim}, s={self.dim})"


class SubspaceCollection:
    """A non-empty list of subspaces sharing ``(m, s)``."""

    __slots__ = ("_subspaces",)

    def __init__(self, subspaces):
        subs = tuple(s if isinstance(s, Subspace) else Subspace(s) for s in subspaces)
        if not subs:
            raise ShapeMismatch("a subspace collection needs at least one member")
        shape = subs[0].basis.shape
        if any(s.basis.shape != shape for s in subs):
            raise ShapeMismatch("all subspaces in a collection must share (m, s)")
        self._subspaces = subs

    @property
    def subspaces(self):
        return list(self._subspaces)

    @property
    def count(self):
        return len(self._subspaces)

    @property
    def bases(self):
        return [s.basis for s in self._subspaces]

    def __len__(self):
        return len(self._subspaces)

    def __getitem__(self, i):
        return self._subspaces[i]

    def __iter__(self):
        return iter(self._subspaces)

    def __repr__(self):
        s0 = self._subspaces[0]
        return f"SubspaceCollection(L={self.count}, m={s0.ambient_dim}, s={s0.dim})"


def _basis(obj):
    return obj.basis if isinstance(obj, Subspace) else np.asarray(obj, dtype=float)


def _bases(coll):
    if isinstance(coll, SubspaceCollection):
        return coll.bases
    return [_basis(b) for b in coll]


def orthonormalize(matrix):
    """Orthonormal basis for the column space of a full-rank matrix.

    Thin QR followed by the sign convention of :func:`fix_signs`, so the
    output is reproducible bit for bit.

    Raises
    ------
    RankDeficient
        If a diagonal entry of R falls below ``1e-10`` relative to the
        largest column norm.
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    m, k = M.shape
    if k == 0 or k > m:
        raise RankDeficient(f"cannot orthonormalize a {m} x {k} matrix")
    Q, R = np.linalg.qr(M)
    scale = max(np.linalg.norm(M, axis=0).max(), 1e-300)
    if np.abs(np.diag(R)).min() <= RANK_TOL * scale:
        raise RankDeficient("matrix is numerically rank deficient")
    return Subspace(fix_signs(Q), check=False)


def subspace_distance(a, b):
    """Distance ``sqrt(s - ||D_a^T D_b||_F^2)`` between equal-dimension subspaces.

    Evaluated as ``||D_b - D_a D_a^T D_b||_F``, which is the same quantity for
    orthonormal bases but keeps full relative accuracy near zero.
    """
    A, B = _basis(a), _basis(b)
    if A.shape != B.shape:
        raise ShapeMismatch(f"subspace shapes differ: {A.shape} vs {B.shape}")
    s = A.shape[1]
    return float(min(np.linalg.norm(B - A @ (A.T @ B)), np.sqrt(s)))


def project(sub, x):
    """Orthogonal projection ``D D^T x`` of a vector onto the subspace."""
    D = _basis(sub)
    x = np.asarray(x, dtype=float)
    if x.shape[0] != D.shape[0]:
        raise ShapeMismatch(f"vector length {x.shape[0]} does not match m={D.shape[0]}")
    return D @ (D.T @ x)


def match_subspaces(learned, truth):
    """Greedy one-to-one matching of learned subspaces to ground truth.

    Pairs are taken in order of decreasing ``||D_l^T T_p||_F`` without reuse;
    ties go to the lowest index (learned first, then truth).

    Returns
    -------
    perm : ndarray of int
        ``perm[l]`` is the truth index matched to learned subspace ``l``.
    d_avg : float
        Mean normalized distance ``sqrt((s - ||D_l^T T_p||_F^2) / s)`` over pairs.
    """
    D, T = _bases(learned), _bases(truth)
    if len(D) != len(T):
        raise ShapeMismatch(f"collections have {len(D)} and {len(T)} members")
    if D[0].shape != T[0].shape:
        raise ShapeMismatch("learned and truth subspaces differ in (m, s)")
    L, s = len(D), D[0].shape[1]
    S = np.array([[np.sum((Dl.T @ Tp) ** 2) for Tp in T] for Dl in D])
    work = S.copy()
    perm = np.full(L, -1, dtype=int)
    for _ in range(L):
        # argmax over the flattened array returns the lowest (row, col) on ties
        l, p = np.unravel_index(np.argmax(work), work.shape)
        perm[l] = p
        work[l, :] = -np.inf
        work[:, p] = -np.inf
    d = np.sqrt(np.clip(s - S[np.arange(L), perm], 0.0, s) / s)
    return perm, float(d.mean())
