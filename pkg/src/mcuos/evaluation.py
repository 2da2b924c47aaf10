"""Metrics, experiment pipelines and CSV result records."""
import csv
import itertools
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import McuosError, ShapeMismatch

log = logging.getLogger(__name__)

CSV_FIELDS = ["run_id", "method", "metric", "lambda", "L", "s", "missing_frac",
              "sigma_tr_sq", "sigma_te_sq", "seed", "trial", "value"]


@dataclass(frozen=True)
class ResultRecord:
    run_id: str
    method: str
    metric: str
    lam: float
    L: int
    s: int
    missing_frac: float
    sigma_tr_sq: float
    sigma_te_sq: float
    seed: int
    trial: int
    value: float

    def row(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return [d[k] for k in CSV_FIELDS]

    def sort_key(self):
        return (self.method, self.metric, self.lam, self.L, self.s, self.missing_frac,
                self.sigma_tr_sq, self.sigma_te_sq, self.trial)


def relative_error(x, xhat):
    """``||x - xhat||^2 / ||x||^2`` (column-wise for matrices)."""
    x = np.asarray(x, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    return np.sum((x - xhat) ** 2, axis=0) / np.sum(x ** 2, axis=0)


def denoise_linear(model, z, x=None, complete_training=True):
    """Project test signal(s) onto their best-matching learned subspace.

    With complete training data the model mean is removed first and added
    back; a model learned from partially observed data is used without
    centering.

    Parameters
    ----------
    model : McUosModel
    z : ndarray of shape (m,) or (m, q)
    x : ndarray, optional
        Clean signal(s) for the relative error.

    Returns
    -------
    zhat : ndarray
    err : float or ndarray or None
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    Z = z[:, None] if single else z
    if Z.shape[0] != model.bases[0].shape[0]:
        raise ShapeMismatch("test signal length does not match the model")
    mean = model.mean[:, None] if complete_training else np.zeros((Z.shape[0], 1))
    Zc = Z - mean
    coef = [D.T @ Zc for D in model.bases]
    tau = np.argmax(np.stack([np.sum(a ** 2, axis=0) for a in coef]), axis=0)
    zhat = np.empty_like(Z)
    for l, (D, a) in enumerate(zip(model.bases, coef)):
        sel = tau == l
        zhat[:, sel] = D @ a[:, sel] + mean
    err = None
    if x is not None:
        X = np.asarray(x, dtype=float)
        err = relative_error(X[:, None] if single else X, zhat)
        err = float(err[0]) if single else err
    return (zhat[:, 0] if single else zhat), err


def denoise_kernel(model, z, x=None):
    """Pre-image denoising of one or more test signals with a kernel model."""
    from .preimage import preimage
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    Z = z[:, None] if single else z
    zhat = np.column_stack([preimage(model, Z[:, j]) for j in range(Z.shape[1])])
    err = None
    if x is not None:
        X = np.asarray(x, dtype=float)
        err = relative_error(X[:, None] if single else X, zhat)
        err = float(err[0]) if single else err
    return (zhat[:, 0] if single else zhat), err


def clustering_error(assignments, labels, L=None):
    """Misassignment percentage under the best relabeling of clusters.

    All label permutations are tried, so ``L`` should stay small (<= 8).
    """
    a = np.asarray(assignments)
    b = np.asarray(labels)
    if a.shape != b.shape:
        raise ShapeMismatch("assignments and labels differ in length")
    ua, a_idx = np.unique(a, return_inverse=True)
    ub, b_idx = np.unique(b, return_inverse=True)
    K = max(len(ua), len(ub), L or 0)
    if K > 8:
        raise ValueError("exhaustive matching supports at most 8 clusters")
    C = np.zeros((K, K), dtype=int)
    np.add.at(C, (a_idx, b_idx), 1)
    best = max(C[np.arange(K), list(p)].sum() for p in itertools.permutations(range(K)))
    return 100.0 * (a.shape[0] - best) / a.shape[0]


def aggregate(records):
    """Mean and standard deviation of ``value`` per (method, metric, settings)."""
    groups = {}
    for r in records:
        if np.isnan(r.value):
            continue
        # NaN never compares equal, so records from worker processes would each
        # open their own group; map every NaN to the one shared object instead
        key = tuple(np.nan if isinstance(v, float) and v != v else v
                    for v in (r.method, r.metric, r.lam, r.L, r.s, r.missing_frac,
                              r.sigma_tr_sq, r.sigma_te_sq))
        groups.setdefault(key, []).append(r.value)
    return {k: (float(np.mean(v)), float(np.std(v)), len(v)) for k, v in groups.items()}


def write_csv(records, path, comments=()):
    """Write records sorted by setting and trial, preceded by ``#`` comment lines."""
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in sorted(records, key=ResultRecord.sort_key):
            w.writerow(r.row())


def read_csv(path):
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    out = []
    for row in reader:
        out.append(ResultRecord(row["run_id"], row["method"], row["metric"], float(row["lambda"]),
                                int(row["L"]), int(row["s"]), float(row["missing_frac"]),
                                float(row["sigma_tr_sq"]), float(row["sigma_te_sq"]),
                                int(row["seed"]), int(row["trial"]), float(row["value"])))
    return out


# experiment pipelines ------------------------------------------------------

LINEAR_METHODS = ("micusal", "amicusal", "rmicusal")
KERNEL_METHODS = ("mckusal", "rmckusal")
MISSING_METHODS = ("rmicusal", "rmckusal")


def _trial_rng(seed, trial):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


@dataclass
class _TrialData:
    Y: np.ndarray
    labels: np.ndarray = None
    truth: object = None
    test: np.ndarray = None
    sigma_tr_sq: float = 0.0


def _load_data(cfg, rng):
    from .datagen import (SyntheticSpec, add_noise, generate_points, generate_subspaces,
                          load_matrix_csv)
    d = cfg["data"]
    if d["source"] == "synthetic":
        spec = SyntheticSpec(d["m"], d["s"], d["L"], d["t_s"], list(d["cluster_sizes"]),
                             d["sigma_tr_sq"], 0.0)
        truth = generate_subspaces(spec, rng)
        train = generate_points(truth, spec, rng)
        test = generate_points(truth, spec, rng, sizes=[d["n_test"]] * spec.L).clean if d["n_test"] else None
        return _TrialData(add_noise(train.clean, spec.sigma_tr_sq, rng), train.labels, truth, test,
                          spec.sigma_tr_sq)
    Y, labels = load_matrix_csv(d["path"], d["transpose"], d["labels_path"] or None)
    test = None
    if d["test_path"]:
        test, _ = load_matrix_csv(d["test_path"], d["transpose"])
    if d["normalize"]:
        Y = Y / np.linalg.norm(np.nan_to_num(Y), axis=0)
        if test is not None:
            test = test / np.linalg.norm(test, axis=0)
    return _TrialData(Y, labels, None, test, 0.0)


def _fit(method, data, mth, lam, frac, rng):
    from .datagen import generate_masks
    from .kernel_learning import mckusal, rmckusal
    from .kernels import KernelSpec
    from .linear import amicusal, micusal
    from .missing import rmicusal, signals_from_array

    Y = data.Y
    L, s = mth["L"], mth["s"]
    masks = None
    if method in MISSING_METHODS:
        if frac > 0:
            masks = generate_masks(Y.shape[0], Y.shape[1], frac, rng,
                                   s=s if method == "rmicusal" else None)
        signals = signals_from_array(Y, masks)
    if method == "micusal":
        return micusal(Y, L, s, lam, mth["max_outer_iters"], mth["rel_tol"], mth["restarts"], rng)
    if method == "amicusal":
        return amicusal(Y, mth["L_max"], mth["s_max"], lam, mth["k1"], mth["k2"], mth["eps_min"],
                        mth["max_outer_iters"], mth["rel_tol"], mth["restarts"], rng)
    if method == "rmicusal":
        return rmicusal(signals, L, s, lam, mth["eta"], mth["inner_iters"], mth["max_outer_iters"],
                        mth["restarts"], rng)
    spec = (KernelSpec.gaussian(mth["c"]) if mth["kernel"] == "gaussian"
            else KernelSpec.polynomial(mth["c"], mth["d"]))
    if method == "mckusal":
        return mckusal(Y, spec, L, s, lam, mth["max_outer_iters"], mth["inner_max_sweeps"],
                       mth["rel_tol"], rng, restarts=mth["restarts"])
    return rmckusal(signals, spec, L, s, lam, mth["delta_min"], mth["max_outer_iters"],
                    mth["inner_max_sweeps"], mth["rel_tol"], rng, restarts=mth["restarts"])


def _learning_trial(cfg, trial):
    from .datagen import add_noise
    from .subspace import match_subspaces

    ex, d, mth = cfg["experiment"], cfg["data"], cfg["method"]
    rng = _trial_rng(ex["seed"], trial)
    data = _load_data(cfg, rng)
    noisy_tests = {}
    if data.test is not None and ex["mode"] != "cluster":
        noisy_tests = {sig: add_noise(data.test, sig, rng) for sig in d["sigma_te_sq"]}
    records = []

    def emit(method, metric, lam, L, s, frac, sig_te, value):
        records.append(ResultRecord(ex["run_id"], method, metric, float(lam), int(L), int(s),
                                    float(frac), float(data.sigma_tr_sq), float(sig_te),
                                    int(ex["seed"]), int(trial), float(value)))

    for method in mth["methods"]:
        fracs = d["missing_frac"] if method in MISSING_METHODS else [0.0]
        for lam in mth["lambda"]:
            for frac in fracs:
                try:
                    model = _fit(method, data, mth, lam, frac, rng)
                except McuosError as exc:
                    log.warning("%s failed in trial %d: %s", method, trial, exc)
                    emit(method, f"failed:{type(exc).__name__}", lam, mth["L"], mth["s"], frac,
                         np.nan, np.nan)
                    continue
                kernel = method in KERNEL_METHODS
                L_hat = model.n_subspaces
                s_hat = model.s if kernel else model.dim
                emit(method, "objective", lam, L_hat, s_hat, frac, np.nan, model.objective)
                if method == "amicusal":
                    emit(method, "L_hat", lam, L_hat, s_hat, frac, np.nan, L_hat)
                    emit(method, "s_hat", lam, L_hat, s_hat, frac, np.nan, s_hat)
                if (not kernel and data.truth is not None and L_hat == data.truth.count
                        and s_hat == data.truth[0].dim):
                    emit(method, "d_avg", lam, L_hat, s_hat, frac, np.nan,
                         match_subspaces(model.subspaces, data.truth)[1])
                if data.labels is not None and max(L_hat, len(np.unique(data.labels))) <= 8:
                    emit(method, "clustering_error", lam, L_hat, s_hat, frac, np.nan,
                         clustering_error(model.assignments, data.labels))
                for sig, Z in noisy_tests.items():
                    try:
                        if kernel:
                            _, err = denoise_kernel(model, Z, data.test)
                        else:
                            _, err = denoise_linear(model, Z, data.test,
                                                    complete_training=method not in MISSING_METHODS)
                    except McuosError as exc:
                        emit(method, f"failed:{type(exc).__name__}", lam, L_hat, s_hat, frac, sig,
                             np.nan)
                        continue
                    emit(method, "denoise_error", lam, L_hat, s_hat, frac, sig, float(np.mean(err)))
    return records


def _bounds_trial(cfg, trial):
    from .kernels import bound_violation_rates
    b, ex = cfg["bounds"], cfg["experiment"]
    rng = _trial_rng(ex["seed"], trial)
    records = []
    for delta in b["delta"]:
        for n_obs in b["n_obs"]:
            rates = bound_violation_rates(b["m"], n_obs, delta, b["samples"], rng,
                                          b["gaussian_c"], b["poly_c"], b["poly_d"])
            for name, v in rates.items():
                # lambda column carries delta and s carries the number of observed entries
                records.append(ResultRecord(ex["run_id"], name, "violation_rate", float(delta), 1,
                                            int(n_obs), 1.0 - n_obs / b["m"], 0.0, 0.0,
                                            int(ex["seed"]), int(trial), float(v)))
    return records


def run_trial(cfg, trial):
    if cfg["experiment"]["mode"] == "bounds-check":
        return _bounds_trial(cfg, trial)
    return _learning_trial(cfg, trial)


def run_experiment(cfg, jobs=1):
    """Run every trial of a resolved configuration and return all records.

    Trials are independent and seeded from ``(seed, trial)``, so the result
    does not depend on ``jobs``.
    """
    trials = range(cfg["experiment"]["trials"])
    if jobs == 1:
        chunks = [run_trial(cfg, t) for t in trials]
    else:
        from joblib import Parallel, delayed
        chunks = Parallel(n_jobs=jobs)(delayed(run_trial)(cfg, t) for t in trials)
    records = [r for chunk in chunks for r in chunk]
    return sorted(records, key=ResultRecord.sort_key)
