"""Mercer kernels, centered Gram matrices and kernel estimates from missing data.

Also provides the concentration bounds for kernel values estimated from
partially observed signals, and a Monte Carlo harness measuring how often
they are violated.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, eigh

from ._tol import EIG_ZERO
from .exceptions import EmptyOverlap, NumericalFailure, ShapeMismatch, UnsupportedKernel


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian ``exp(-||x - y||^2 / c)`` or polynomial ``(<x, y> + c)^d`` kernel."""

    kind: str = "gaussian"
    c: float = 1.0
    d: int = 1

    def __post_init__(self):
        if self.kind == "gaussian":
            if not self.c > 0:
                raise UnsupportedKernel("gaussian kernel needs c > 0")
        elif self.kind == "polynomial":
            if self.c < 0 or int(self.d) != self.d or self.d < 1:
                raise UnsupportedKernel("polynomial kernel needs c >= 0 and integer d >= 1")
        else:
            raise UnsupportedKernel(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def gaussian(cls, c):
        return cls("gaussian", float(c), 1)

    @classmethod
    def polynomial(cls, c=0.0, d=1):
        return cls("polynomial", float(c), int(d))

    def from_sqdist(self, sq):
        return np.exp(-np.maximum(sq, 0.0) / self.c)

    def from_inner(self, ip):
        return (ip + self.c) ** self.d

    def __call__(self, X, Z=None):
        """Kernel matrix between the columns of ``X`` and those of ``Z``."""
        X = np.asarray(X, dtype=float)
        Z = X if Z is None else np.asarray(Z, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Z.ndim == 1:
            Z = Z[:, None]
        ip = X.T @ Z
        if self.kind == "polynomial":
            return self.from_inner(ip)
        sq = np.sum(X ** 2, axis=0)[:, None] + np.sum(Z ** 2, axis=0)[None, :] - 2.0 * ip
        return self.from_sqdist(sq)

    def self_value(self, X):
        """``kappa(x, x)`` for every column of ``X``."""
        X = np.asarray(X, dtype=float)
        if self.kind == "gaussian":
            return np.ones(X.shape[1] if X.ndim == 2 else 1)
        return self.from_inner(np.sum(X ** 2, axis=0))


def kernel_value(spec, y, y2):
    y = np.asarray(y, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if y.shape != y2.shape:
        raise ShapeMismatch("kernel arguments differ in length")
    if spec.kind == "gaussian":
        return float(np.exp(-np.sum((y - y2) ** 2) / spec.c))
    return float((y @ y2 + spec.c) ** spec.d)


@dataclass
class GramMatrix:
    values: np.ndarray
    centered: bool = False


@dataclass
class EstimatedGram:
    values: np.ndarray
    psd_repaired: bool = False
    delta_min: float = 1e-6
    centered: bool = False


def gram(spec, data):
    """Gram matrix of the columns of ``data``, symmetrized exactly."""
    G = spec(data)
    return GramMatrix(0.5 * (G + G.T), False)


def center_matrix(G):
    """``G - HG - GH + HGH`` with ``H`` the all-``1/N`` matrix."""
    G = np.asarray(G, dtype=float)
    row = G.mean(axis=0, keepdims=True)
    col = G.mean(axis=1, keepdims=True)
    Gc = G - row - col + G.mean()
    return 0.5 * (Gc + Gc.T)


def center(g):
    """Center a Gram matrix in feature space (idempotent)."""
    vals = g.values if hasattr(g, "values") else g
    out = center_matrix(vals)
    if isinstance(g, EstimatedGram):
        return EstimatedGram(out, g.psd_repaired, g.delta_min, True)
    return GramMatrix(out, True)


def centered_cross_vector(k_y, G, idx):
    """Centered feature inner products between a new point and training points.

    Parameters
    ----------
    k_y : ndarray of shape (N,) or (N, q)
        Uncentered kernel values between the new point(s) and every training point.
    G : ndarray of shape (N, N)
        Uncentered training Gram matrix.
    idx : array-like of int
        Training indices to return.
    """
    k_y = np.asarray(k_y, dtype=float)
    idx = np.asarray(idx, dtype=int)
    return k_y[idx] - k_y.mean(axis=0) - G[idx].mean(axis=1).reshape((-1,) + (1,) * (k_y.ndim - 1)) + G.mean()


def centered_self_value(k_yy, k_y, G):
    """Centered ``kappa(y, y)``."""
    return k_yy - 2.0 * np.asarray(k_y).mean(axis=0) + G.mean()


def _overlap_stats(spec, a, b):
    common, ia, ib = np.intersect1d(a.omega, b.omega, assume_unique=True, return_indices=True)
    return common.size, a.values[ia], b.values[ib]


def estimate_kernel_missing(spec, a, b):
    """Kernel value estimated from the coordinates observed in both signals.

    Squared distances and inner products over the overlap are rescaled by
    ``m / |overlap|`` before the kernel profile is applied.
    """
    if a.ambient_dim != b.ambient_dim:
        raise ShapeMismatch("signals differ in ambient dimension")
    if spec.kind == "polynomial" and spec.d % 2 == 0:
        raise UnsupportedKernel("missing-data estimation needs an odd polynomial degree")
    n, va, vb = _overlap_stats(spec, a, b)
    if n == 0:
        raise EmptyOverlap(0, 1)
    scale = a.ambient_dim / n
    if spec.kind == "gaussian":
        return float(spec.from_sqdist(scale * np.sum((va - vb) ** 2)))
    return float(spec.from_inner(scale * (va @ vb)))


def _dense_and_mask(signals, m):
    Z = np.zeros((m, len(signals)))
    M = np.zeros((m, len(signals)))
    for i, sig in enumerate(signals):
        Z[sig.omega, i] = sig.values
        M[sig.omega, i] = 1.0
    return Z, M


def estimated_cross_kernel(spec, signals_a, signals_b):
    """Matrix of :func:`estimate_kernel_missing` values between two signal lists."""
    if not signals_a or not signals_b:
        raise ShapeMismatch("empty signal list")
    m = signals_a[0].ambient_dim
    if spec.kind == "polynomial" and spec.d % 2 == 0:
        raise UnsupportedKernel("missing-data estimation needs an odd polynomial degree")
    Za, Ma = _dense_and_mask(signals_a, m)
    Zb, Mb = _dense_and_mask(signals_b, m)
    C = Ma.T @ Mb
    if np.any(C == 0):
        i, j = np.argwhere(C == 0)[0]
        raise EmptyOverlap(i, j)
    ip = Za.T @ Zb
    if spec.kind == "polynomial":
        return spec.from_inner(m / C * ip)
    sq = (Za ** 2).T @ Mb + Ma.T @ (Zb ** 2) - 2.0 * ip
    return spec.from_sqdist(m / C * sq)


def psd_repair(g, delta_min=1e-6):
    """Make a symmetric matrix positive definite by mapping its eigenvalues.

    Positive eigenvalues are kept, (numerically) zero ones become
    ``delta_min`` and negative ones are replaced by their magnitude. If no
    eigenvalue needs mapping the input is returned unchanged.
    """
    G = np.asarray(g, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ShapeMismatch("psd_repair needs a square matrix")
    G = 0.5 * (G + G.T)
    try:
        lam, U = eigh(G)
    except LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    if lam.min() > EIG_ZERO:
        return EstimatedGram(G, False, delta_min)
    lam_hat = np.where(lam > EIG_ZERO, lam, np.where(lam < -EIG_ZERO, -lam, delta_min))
    out = (U * lam_hat) @ U.T
    return EstimatedGram(0.5 * (out + out.T), True, delta_min)


def estimated_gram_missing(spec, signals, delta_min=1e-6):
    """Estimated Gram matrix of partially observed signals, repaired to be PD."""
    G = estimated_cross_kernel(spec, signals, signals)
    G = 0.5 * (G + G.T)
    if spec.kind == "gaussian":
        np.fill_diagonal(G, 1.0)
    return psd_repair(G, delta_min)


# concentration bounds ------------------------------------------------------

def coherence(z):
    """``m ||z||_inf^2 / ||z||_2^2``."""
    z = np.asarray(z, dtype=float)
    return z.shape[-1] * np.max(np.abs(z), axis=-1) ** 2 / np.sum(z ** 2, axis=-1)


def distance_alpha(yi, yj, n_obs, delta):
    return np.sqrt(2.0 * coherence(np.asarray(yi) - np.asarray(yj)) ** 2 / n_obs * np.log(1.0 / delta))


def inner_product_beta(yi, yj, n_obs, delta):
    m = np.shape(yi)[-1]
    zmax = np.max(np.abs(np.asarray(yi) * np.asarray(yj)), axis=-1)
    return np.sqrt(2.0 * m ** 2 * zmax ** 2 / n_obs * np.log(1.0 / delta))


def gaussian_kernel_bounds(h, alpha):
    """Interval ``[h^(1/(1-alpha)), h^(1/(1+alpha))]`` for the true gaussian kernel.

    When ``alpha >= 1`` the lower end is the trivial bound 0.
    """
    h = np.asarray(h, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lower = np.where(alpha < 1, h ** (1.0 / np.where(alpha < 1, 1.0 - alpha, 1.0)), 0.0)
    upper = h ** (1.0 / (1.0 + alpha))
    return lower, upper


def polynomial_kernel_bounds(h, beta, d):
    """Interval ``[(h^(1/d) - beta)^d, (h^(1/d) + beta)^d]`` for odd ``d``."""
    if d % 2 == 0:
        raise UnsupportedKernel("the polynomial bound needs an odd degree")
    root = np.cbrt(h) if d == 3 else np.sign(h) * np.abs(h) ** (1.0 / d)
    return (root - beta) ** d, (root + beta) ** d


def bound_violation_rates(m=100, n_obs=50, delta=0.1, trials=10000, rng=None,
                          gaussian_c=4.0, poly_c=1.0, poly_d=3, shrink=1.0):
    """Empirical failure frequency of each concentration bound.

    Draws random unit-norm pairs and ``n_obs`` coordinates uniformly with
    replacement (duplicates kept), then checks the squared-distance
    sandwich, the inner-product deviation, and the derived gaussian and
    odd-polynomial kernel intervals.

    Returns
    -------
    dict
        Violation rate per bound: ``distance``, ``inner_product``,
        ``gaussian`` and ``polynomial``.
    """
    rng = np.random.default_rng(rng)
    Y1 = rng.standard_normal((trials, m))
    Y2 = rng.standard_normal((trials, m))
    Y1 /= np.linalg.norm(Y1, axis=1, keepdims=True)
    Y2 /= np.linalg.norm(Y2, axis=1, keepdims=True)
    idx = rng.integers(0, m, (trials, n_obs))
    rows = np.arange(trials)[:, None]
    diff = Y1 - Y2
    prod = Y1 * Y2
    sq_true = np.sum(diff ** 2, axis=1)
    sq_est = m / n_obs * np.sum(diff[rows, idx] ** 2, axis=1)
    ip_true = np.sum(prod, axis=1)
    ip_est = m / n_obs * np.sum(prod[rows, idx], axis=1)
    alpha = shrink * distance_alpha(Y1, Y2, n_obs, delta)
    beta = shrink * inner_product_beta(Y1, Y2, n_obs, delta)

    dist_ok = ((1 - alpha) * sq_true <= sq_est) & (sq_est <= (1 + alpha) * sq_true)
    ip_ok = np.abs(ip_est - ip_true) <= beta

    gspec = KernelSpec.gaussian(gaussian_c)
    k_g = gspec.from_sqdist(sq_true)
    lo, hi = gaussian_kernel_bounds(gspec.from_sqdist(sq_est), alpha)
    g_ok = (lo <= k_g * (1 + 1e-12)) & (k_g <= hi * (1 + 1e-12))

    pspec = KernelSpec.polynomial(poly_c, poly_d)
    k_p = pspec.from_inner(ip_true)
    lo, hi = polynomial_kernel_bounds(pspec.from_inner(ip_est), beta, poly_d)
    tol = 1e-12 * np.maximum(1.0, np.abs(k_p))
    p_ok = (lo <= k_p + tol) & (k_p <= hi + tol)
    return {
        "distance": float(1 - dist_ok.mean()),
        "inner_product": float(1 - ip_ok.mean()),
        "gaussian": float(1 - g_ok.mean()),
        "polynomial": float(1 - p_ok.mean()),
    }
