"""Synthetic union-of-subspaces data, noise, observation masks and file input."""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InsufficientObservations, ParseError, ShapeMismatch, TilingError
from .subspace import SubspaceCollection, orthonormalize


@dataclass
class SyntheticSpec:
    """Parameters of the synthetic protocol.

    The defaults reproduce the standard setting: five 13-dimensional
    subspaces of R^180 with 650 points in total.
    """

    m: int = 180
    s: int = 13
    L: int = 5
    t_s: float = 0.04
    cluster_sizes: list = field(default_factory=lambda: [150, 100, 150, 100, 150])
    sigma_tr_sq: float = 0.1
    sigma_te_sq: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.cluster_sizes) != self.L:
            raise ShapeMismatch(f"need {self.L} cluster sizes, got {len(self.cluster_sizes)}")
        if not 0 < self.s < self.m:
            raise ShapeMismatch("need 0 < s < m")
        if self.t_s < 0 or self.sigma_tr_sq < 0 or self.sigma_te_sq < 0:
            raise ValueError("t_s and noise variances must be nonnegative")

    @property
    def N(self):
        return int(sum(self.cluster_sizes))


@dataclass
class Dataset:
    clean: np.ndarray
    noisy: np.ndarray
    labels: np.ndarray
    truth: SubspaceCollection = None


def generate_subspaces(spec, rng=None):
    """Chain of nearby subspaces ``T_l = orth(T_{l-1} + t_s W_l)``.

    ``T_1`` is a random orthonormal basis and ``W_l`` has i.i.d. entries
    uniform on [0, 1].
    """
    rng = np.random.default_rng(spec.rng_seed) if rng is None else rng
    T = [orthonormalize(rng.standard_normal((spec.m, spec.s)))]
    for _ in range(1, spec.L):
        T.append(orthonormalize(T[-1].basis + spec.t_s * rng.uniform(0.0, 1.0, (spec.m, spec.s))))
    return SubspaceCollection(T)


def generate_points(truth, spec, rng=None, sizes=None, normalize=True):
    """Gaussian coefficients on each subspace, optionally unit-normalized.

    Returns a :class:`Dataset` whose ``noisy`` field equals ``clean``; use
    :func:`add_noise` to corrupt it.
    """
    rng = np.random.default_rng(spec.rng_seed) if rng is None else rng
    sizes = spec.cluster_sizes if sizes is None else sizes
    if len(sizes) != truth.count:
        raise ShapeMismatch("one cluster size per subspace is required")
    blocks, labels = [], []
    for l, (T, n) in enumerate(zip(truth.bases, sizes)):
        blocks.append(T @ rng.standard_normal((T.shape[1], n)))
        labels.append(np.full(n, l))
    X = np.hstack(blocks)
    if normalize:
        X /= np.linalg.norm(X, axis=0)
    return Dataset(X, X.copy(), np.concatenate(labels), truth)


def add_noise(data, sigma_sq, rng):
    """Add i.i.d. Gaussian noise of variance ``sigma_sq / m`` per entry."""
    data = np.asarray(data, dtype=float)
    if sigma_sq == 0:
        return data.copy()
    return data + rng.normal(0.0, np.sqrt(sigma_sq / data.shape[0]), data.shape)


def generate_masks(m, N, missing_fraction, rng, s=None, replace=False):
    """Observed index sets of size ``round((1 - missing_fraction) m)``.

    Without replacement each set is a uniform random subset; with
    replacement indices are drawn independently and duplicates removed.

    Raises
    ------
    InsufficientObservations
        If ``s`` is given and the set size does not exceed it.
    """
    if not 0 <= missing_fraction < 1:
        raise ValueError("missing_fraction must lie in [0, 1)")
    k = int(round((1.0 - missing_fraction) * m))
    if s is not None and k <= s:
        raise InsufficientObservations(f"{k} observed entries do not exceed s={s}")
    if k == m and not replace:
        return [np.arange(m) for _ in range(N)]
    if replace:
        return [np.unique(rng.integers(0, m, k)) for _ in range(N)]
    return [np.sort(rng.choice(m, k, replace=False)) for _ in range(N)]


def synthetic_dataset(spec, rng=None):
    """Subspaces, clean points and noisy training points in one call."""
    rng = np.random.default_rng(spec.rng_seed) if rng is None else rng
    truth = generate_subspaces(spec, rng)
    ds = generate_points(truth, spec, rng)
    ds.noisy = add_noise(ds.clean, spec.sigma_tr_sq, rng)
    return ds


def load_matrix_csv(path, transpose=False, labels_path=None):
    """Read a headerless comma-separated matrix.

    Each row of the file is one signal unless ``transpose`` is set, in which
    case each column is. The result is always ``m x N`` (one signal per
    column). Empty fields are read as NaN (missing).
    """
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(v) if v.strip() else np.nan for v in line.split(",")])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no data")
    width = len(rows[0])
    for i, r in enumerate(rows, 1):
        if len(r) != width:
            raise ParseError(f"{path}: row {i} has {len(r)} fields, expected {width}")
    M = np.array(rows)
    M = M if transpose else M.T
    labels = None
    if labels_path is not None:
        try:
            labels = np.loadtxt(labels_path, dtype=int, ndmin=1)
        except ValueError as exc:
            raise ParseError(f"{labels_path}: {exc}") from None
        if labels.shape[0] != M.shape[1]:
            raise ParseError(f"{labels_path}: {labels.shape[0]} labels for {M.shape[1]} signals")
    return M, labels


def extract_patches(image, patch_h, patch_w, normalize=False):
    """Non-overlapping patches in row-major order, one flattened patch per column."""
    img = np.asarray(image, dtype=float)
    H, W = img.shape
    if H % patch_h or W % patch_w:
        raise TilingError(f"{patch_h}x{patch_w} patches do not tile a {H}x{W} image")
    P = (img.reshape(H // patch_h, patch_h, W // patch_w, patch_w)
         .transpose(0, 2, 1, 3).reshape(-1, patch_h * patch_w).T)
    if normalize:
        P = P / np.maximum(np.linalg.norm(P, axis=0), 1e-300)
    return P


def assemble_patches(patches, image_shape, patch_h, patch_w):
    """Inverse of :func:`extract_patches` (without normalization)."""
    H, W = image_shape
    if H % patch_h or W % patch_w:
        raise TilingError(f"{patch_h}x{patch_w} patches do not tile a {H}x{W} image")
    P = np.asarray(patches).T.reshape(H // patch_h, W // patch_w, patch_h, patch_w)
    return P.transpose(0, 2, 1, 3).reshape(H, W)
