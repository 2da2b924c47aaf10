"""Pre-images of feature-space projections for gaussian and odd polynomial kernels.

The denoised version of a test signal ``z`` is its projection onto the
nearest learned feature-space subspace. The pre-image is a weighted
combination of training signals whose weights come from kernel values only.
"""
from dataclasses import dataclass

import numpy as np

from ._tol import DENOM_MIN
from .exceptions import DegenerateDenominator, UncoveredCoordinate, UnsupportedKernel
from .kernel_learning import cross_kernel, kernel_scores
from .kernels import centered_cross_vector


@dataclass
class PreimageWeights:
    """Quantities behind one pre-image.

    Attributes
    ----------
    chi_hat : ndarray of shape (N,)
        Expansion of the projected feature vector over the training images.
    zeta : ndarray of shape (N_tau,)
        Coefficients ``E E^T psi~`` over the chosen cluster.
    tau : int
        Chosen subspace.
    e : ndarray of shape (N,)
        Final combination weights.
    dist_sq : ndarray of shape (N,)
        Squared feature distance from each training image to the projection.
    proj_dot : ndarray of shape (N,)
        Inner product of the projection with each training image.
    proj_norm_sq : float
    """

    chi_hat: np.ndarray
    zeta: np.ndarray
    tau: int
    e: np.ndarray
    dist_sq: np.ndarray
    proj_dot: np.ndarray
    proj_norm_sq: float


def _odd_root_power(x, d):
    # real value of x ** ((d - 1) / d) for odd d: the d-th root keeps the sign
    # and the even power d - 1 removes it
    return np.abs(x) ** ((d - 1) / d)


def projection_terms(model, z, tau=None):
    """Feature distances and inner products for the projection of ``z``."""
    k = cross_kernel(model, z)
    if tau is None:
        tau = int(np.argmin(kernel_scores(model, z)))
    G = model.gram_raw
    N = G.shape[0]
    c, E = model.clusters[tau], model.coefficients[tau]
    colsum = G.sum(axis=0)
    total = colsum.sum()
    if c.size and E.shape[1]:
        psi = centered_cross_vector(k, G, c)
        zeta = E @ (E.T @ psi)
        Gc_rows = G[c]
        zG = zeta @ Gc_rows
        zs = zeta.sum()
        rowsum_c = Gc_rows.sum(axis=1)
        zpsi = zeta @ psi
    else:
        zeta = np.zeros(c.size)
        zG = np.zeros(N)
        zs = zpsi = 0.0
        rowsum_c = np.zeros(c.size)
    chi_hat = np.full(N, (1.0 - zs) / N)
    chi_hat[c] += zeta
    dist_sq = (zpsi + 2.0 / N * (zeta @ rowsum_c) - 2.0 * zG - 2.0 / N ** 2 * total * zs
               + 2.0 / N * zs * colsum + np.diag(G) + total / N ** 2 - 2.0 / N * colsum)
    proj_dot = zG - zs * colsum / N + colsum / N
    proj_norm_sq = float(zpsi + 2.0 / N * (zeta @ rowsum_c) - 2.0 / N ** 2 * total * zs + total / N ** 2)
    return tau, chi_hat, zeta, dist_sq, proj_dot, proj_norm_sq


def feature_distance_to_projection(model, z, i, tau=None):
    """Squared feature distance between training image ``i`` and the projection of ``z``."""
    return float(projection_terms(model, z, tau)[3][i])


def preimage_weights(model, z, tau=None):
    """Combination weights for the pre-image of ``z``."""
    tau, chi_hat, zeta, dist_sq, proj_dot, proj_norm_sq = projection_terms(model, z, tau)
    spec = model.spec
    if spec.kind == "gaussian":
        e = chi_hat * 0.5 * (2.0 - dist_sq)
    else:
        if spec.d % 2 == 0:
            raise UnsupportedKernel("polynomial pre-images need an odd degree")
        if abs(proj_norm_sq) < DENOM_MIN:
            raise DegenerateDenominator("projection has zero norm")
        e = chi_hat * _odd_root_power(proj_dot / proj_norm_sq, spec.d)
    return PreimageWeights(chi_hat, zeta, tau, e, dist_sq, proj_dot, proj_norm_sq)


def _combine(model, e, values, counts):
    N = e.shape[0]
    num = values @ e
    if model.spec.kind == "gaussian":
        esum = e.sum()
        if abs(esum) < DENOM_MIN:
            raise DegenerateDenominator(f"weight sum {esum:.3e} is too close to zero")
        out = num / (esum * counts / N)
    else:
        out = num
    if not np.all(np.isfinite(out)):
        raise DegenerateDenominator("pre-image is not finite")
    return out


def preimage_gaussian(model, z, tau=None):
    if model.spec.kind != "gaussian":
        raise UnsupportedKernel("model was not trained with a gaussian kernel")
    return preimage(model, z, tau)


def preimage_polynomial(model, z, tau=None):
    if model.spec.kind != "polynomial":
        raise UnsupportedKernel("model was not trained with a polynomial kernel")
    return preimage(model, z, tau)


def preimage(model, z, tau=None):
    """Pre-image of the projection of ``z`` onto its nearest learned subspace.

    With partially observed training signals every coordinate is combined
    over the signals that observe it.

    Raises
    ------
    DegenerateDenominator
        If the gaussian weights sum to (nearly) zero or the polynomial
        projection vanishes.
    UncoveredCoordinate
        If some coordinate is observed by no training signal.
    """
    w = preimage_weights(model, z, tau)
    if model.missing:
        return preimage_missing(model, z, w)
    Y = model.train
    return _combine(model, w.e, Y, np.full(Y.shape[0], Y.shape[1]))


def preimage_missing(model, z, weights=None):
    """Per-coordinate pre-image from partially observed training signals."""
    w = preimage_weights(model, z) if weights is None else weights
    signals = model.train
    m = signals[0].ambient_dim
    Z = np.zeros((m, len(signals)))
    counts = np.zeros(m)
    for i, sig in enumerate(signals):
        Z[sig.omega, i] = sig.values
        counts[sig.omega] += 1
    if np.any(counts == 0):
        raise UncoveredCoordinate(int(np.flatnonzero(counts == 0)[0]))
    return _combine(model, w.e, Z, counts)
