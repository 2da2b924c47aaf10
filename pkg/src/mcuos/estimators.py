"""scikit-learn style wrappers around the learners.

Inputs follow the scikit-learn layout: ``X`` has shape (n_samples, n_features)
and missing entries are NaN (only the ``Robust*`` estimators accept them).
``transform`` returns each sample projected onto (or, for kernel models,
reconstructed from) its best-matching learned subspace, in the same layout.
"""
import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .evaluation import denoise_kernel, denoise_linear
from .exceptions import ShapeMismatch
from .kernels import KernelSpec
from .missing import ObservedSignal


def _validate(X, allow_nan=False):
    X = check_array(X, dtype=float, ensure_all_finite="allow-nan" if allow_nan else True,
                    ensure_min_samples=2)
    return X


def _kernel_spec(kernel, c, d):
    if kernel == "gaussian":
        return KernelSpec.gaussian(c)
    if kernel == "polynomial":
        return KernelSpec.polynomial(c, d)
    raise ValueError(f"unknown kernel {kernel!r}")


def _signals(X):
    return [ObservedSignal.from_nan(row) for row in X]


class _LinearBase(ClusterMixin, TransformerMixin, BaseEstimator):
    _allow_nan = False

    def _check_new(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float, ensure_all_finite=True)
        if X.shape[1] != self.n_features_in_:
            raise ShapeMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def _store(self, model, n_features):
        self.model_ = model
        self.n_features_in_ = n_features
        self.bases_ = model.bases
        self.mean_ = model.mean
        self.labels_ = model.assignments
        self.objective_ = model.objective
        self.n_iter_ = model.n_iter
        self.n_subspaces_ = model.n_subspaces
        self.dim_ = model.dim
        return self

    def predict(self, X):
        """Index of the best-matching subspace for every sample."""
        X = self._check_new(X)
        Zc = X.T - (self.mean_[:, None] if not self._allow_nan else 0.0)
        energy = np.stack([np.sum((D.T @ Zc) ** 2, axis=0) for D in self.bases_])
        return np.argmax(energy, axis=0)

    def transform(self, X):
        """Project every sample onto its best-matching subspace."""
        X = self._check_new(X)
        zhat, _ = denoise_linear(self.model_, X.T, complete_training=not self._allow_nan)
        return zhat.T

    def score(self, X, y=None):
        """Negative mean relative reconstruction error of ``transform``."""
        X = self._check_new(X)
        Xh = self.transform(X)
        return -float(np.mean(np.sum((X - Xh) ** 2, axis=1) / np.sum(X ** 2, axis=1)))


class MiCUSaL(_LinearBase):
    """Union of ``L`` subspaces of dimension ``s`` with a closeness penalty.

    Parameters
    ----------
    n_subspaces : int
    dim : int
    lam : float, default=2.0
        Weight of the representation error relative to subspace closeness.
        ``np.inf`` ignores closeness (k-subspaces with PCA updates).
    max_outer_iters : int, default=100
    rel_tol : float, default=1e-6
    restarts : int, default=1
        Random initializations; the lowest objective wins.
    random_state : int, Generator or None
    """

    def __init__(self, n_subspaces=2, dim=1, lam=2.0, max_outer_iters=100, rel_tol=1e-6,
                 restarts=1, random_state=None):
        self.n_subspaces = n_subspaces
        self.dim = dim
        self.lam = lam
        self.max_outer_iters = max_outer_iters
        self.rel_tol = rel_tol
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        from .linear import micusal
        X = _validate(X)
        model = micusal(X.T, self.n_subspaces, self.dim, self.lam, self.max_outer_iters,
                        self.rel_tol, self.restarts, self.random_state)
        return self._store(model, X.shape[1])


class AdaptiveMiCUSaL(_LinearBase):
    """Union of subspaces whose count and dimension are estimated from the data.

    Parameters
    ----------
    max_subspaces : int
        Upper bound ``L_max`` on the number of subspaces.
    max_dim : int
        Upper bound ``s_max`` on the subspace dimension.
    lam : float, default=2.0
    k1, k2 : int
        Neighbourhood sizes for the maximum-likelihood dimension estimate.
    eps_min : float, default=0.1
        Subspaces closer than ``eps_min`` in normalized distance are merged.
    """

    def __init__(self, max_subspaces=8, max_dim=20, lam=2.0, k1=6, k2=10, eps_min=0.1,
                 max_outer_iters=100, rel_tol=1e-6, restarts=1, random_state=None):
        self.max_subspaces = max_subspaces
        self.max_dim = max_dim
        self.lam = lam
        self.k1 = k1
        self.k2 = k2
        self.eps_min = eps_min
        self.max_outer_iters = max_outer_iters
        self.rel_tol = rel_tol
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        from .linear import amicusal
        X = _validate(X)
        model = amicusal(X.T, self.max_subspaces, self.max_dim, self.lam, self.k1, self.k2,
                         self.eps_min, self.max_outer_iters, self.rel_tol, self.restarts,
                         self.random_state)
        return self._store(model, X.shape[1])


class RobustMiCUSaL(_LinearBase):
    """Union-of-subspaces learning from samples with missing (NaN) entries.

    The data are not centered. ``predict`` and ``transform`` expect complete
    samples.
    """

    _allow_nan = True

    def __init__(self, n_subspaces=2, dim=1, lam=2.0, eta=0.1, inner_iters=100,
                 max_outer_iters=100, restarts=1, random_state=None):
        self.n_subspaces = n_subspaces
        self.dim = dim
        self.lam = lam
        self.eta = eta
        self.inner_iters = inner_iters
        self.max_outer_iters = max_outer_iters
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        from .missing import rmicusal
        X = _validate(X, allow_nan=True)
        model = rmicusal(_signals(X), self.n_subspaces, self.dim, self.lam, self.eta,
                         self.inner_iters, self.max_outer_iters, self.restarts, self.random_state)
        return self._store(model, X.shape[1])


class _KernelBase(ClusterMixin, TransformerMixin, BaseEstimator):
    _allow_nan = False

    def _check_new(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float,
                        ensure_all_finite="allow-nan" if self._allow_nan else True)
        if X.shape[1] != self.n_features_in_:
            raise ShapeMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def _queries(self, X):
        return _signals(X) if self.model_.missing else X.T

    def _store(self, model, n_features):
        self.model_ = model
        self.n_features_in_ = n_features
        self.labels_ = model.assignments
        self.objective_ = model.objective
        self.n_iter_ = model.n_iter
        self.n_subspaces_ = model.n_subspaces
        self.clusters_ = model.clusters
        self.coefficients_ = model.coefficients
        return self

    def predict(self, X):
        """Index of the feature-space subspace with the smallest residual."""
        from .kernel_learning import kernel_scores
        X = self._check_new(X)
        return np.argmin(np.atleast_2d(kernel_scores(self.model_, self._queries(X))), axis=0)

    def transform(self, X):
        """Pre-image of each sample's projection onto its nearest feature-space subspace."""
        X = self._check_new(X)
        if np.isnan(X).any():
            raise ValueError("transform needs complete samples")
        zhat, _ = denoise_kernel(self.model_, X.T)
        return zhat.T


class MCKUSaL(_KernelBase):
    """Union of subspaces in a kernel feature space.

    Parameters
    ----------
    n_subspaces : int
    dim : int
        Dimension of every feature-space subspace.
    kernel : {"gaussian", "polynomial"}
    c : float
        Gaussian width ``exp(-||x - y||^2 / c)`` or polynomial offset.
    d : int
        Polynomial degree (odd for pre-images).
    lam : float, default=4.0
    restarts : int, default=1
        Random initializations; the lowest objective wins.
    """

    def __init__(self, n_subspaces=2, dim=1, kernel="gaussian", c=4.0, d=3, lam=4.0,
                 max_outer_iters=100, inner_max_sweeps=20, rel_tol=1e-6, restarts=1,
                 random_state=None):
        self.n_subspaces = n_subspaces
        self.dim = dim
        self.kernel = kernel
        self.c = c
        self.d = d
        self.lam = lam
        self.max_outer_iters = max_outer_iters
        self.inner_max_sweeps = inner_max_sweeps
        self.rel_tol = rel_tol
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        from .kernel_learning import mckusal
        X = _validate(X)
        model = mckusal(X.T, _kernel_spec(self.kernel, self.c, self.d), self.n_subspaces,
                        self.dim, self.lam, self.max_outer_iters, self.inner_max_sweeps,
                        self.rel_tol, self.random_state, restarts=self.restarts)
        return self._store(model, X.shape[1])


class RobustMCKUSaL(_KernelBase):
    """Kernel union-of-subspaces learning from samples with missing (NaN) entries.

    The Gram matrix is estimated from overlapping entries and repaired to be
    positive semidefinite; ``psd_repaired_`` records whether repair was
    needed.
    """

    _allow_nan = True

    def __init__(self, n_subspaces=2, dim=1, kernel="gaussian", c=4.0, d=3, lam=4.0,
                 delta_min=1e-6, max_outer_iters=100, inner_max_sweeps=20, rel_tol=1e-6,
                 restarts=1, random_state=None):
        self.n_subspaces = n_subspaces
        self.dim = dim
        self.kernel = kernel
        self.c = c
        self.d = d
        self.lam = lam
        self.delta_min = delta_min
        self.max_outer_iters = max_outer_iters
        self.inner_max_sweeps = inner_max_sweeps
        self.rel_tol = rel_tol
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        from .kernel_learning import rmckusal
        X = _validate(X, allow_nan=True)
        model = rmckusal(_signals(X), _kernel_spec(self.kernel, self.c, self.d),
                         self.n_subspaces, self.dim, self.lam, self.delta_min,
                         self.max_outer_iters, self.inner_max_sweeps, self.rel_tol,
                         self.random_state, restarts=self.restarts)
        self.psd_repaired_ = model.psd_repaired
        return self._store(model, X.shape[1])
