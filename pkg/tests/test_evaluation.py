import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_basis
from mcuos.config import resolve
from mcuos.evaluation import (ResultRecord, aggregate, clustering_error, denoise_linear,
                              read_csv, relative_error, run_experiment, write_csv)
from mcuos.exceptions import ShapeMismatch
from mcuos.linear import McUosModel
from mcuos.subspace import SubspaceCollection


def test_relative_error():
    x = np.array([3.0, 4.0])
    assert relative_error(x, x) == 0.0
    assert relative_error(x, np.zeros(2)) == pytest.approx(1.0)
    np.testing.assert_allclose(relative_error(np.eye(2), np.zeros((2, 2))), [1.0, 1.0])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 16), L=st.integers(1, 5))
def test_clustering_error_ignores_label_names(seed, L):
    r = np.random.default_rng(seed)
    labels = r.integers(0, L, 40)
    perm = r.permutation(L)
    assert clustering_error(perm[labels], labels) == 0.0
    a = r.integers(0, L, 40)
    assert clustering_error(perm[a], labels) == clustering_error(a, labels)


def test_clustering_error_known_value():
    # best matching maps 0->1 and 1->0, leaving one mistake out of five
    assert clustering_error([1, 1, 0, 0, 0], [0, 0, 1, 1, 0]) == pytest.approx(20.0)


def test_clustering_error_random_labels(rng):
    labels = np.repeat([0, 1], 5000)
    err = clustering_error(rng.integers(0, 2, 10000), labels)
    assert 48.0 <= err <= 50.0


def test_clustering_error_shape_check():
    with pytest.raises(ShapeMismatch):
        clustering_error([0, 1], [0])


def make_model(rng, m=12, s=2, L=3, mean=None):
    bases = [random_basis(rng, m, s) for _ in range(L)]
    mean = np.zeros(m) if mean is None else mean
    return McUosModel(SubspaceCollection(bases), mean, np.zeros(1, dtype=int), 0.0), bases


def test_denoise_signals_on_subspaces_exactly(rng):
    mu = rng.standard_normal(12)
    model, bases = make_model(rng, mean=mu)
    X = np.column_stack([B @ rng.standard_normal(2) for B in bases]) + mu[:, None]
    zhat, err = denoise_linear(model, X, X)
    np.testing.assert_allclose(zhat, X, atol=1e-12)
    np.testing.assert_allclose(err, 0.0, atol=1e-20)


def test_denoise_projects_onto_best_subspace(rng):
    model, bases = make_model(rng)
    z = rng.standard_normal(12)
    zhat, _ = denoise_linear(model, z)
    residuals = [np.linalg.norm(z - B @ (B.T @ z)) for B in bases]
    B = bases[int(np.argmin(residuals))]
    np.testing.assert_allclose(zhat, B @ (B.T @ z), atol=1e-12)


def test_denoise_without_centering(rng):
    model, bases = make_model(rng, mean=np.ones(12))
    x = bases[1] @ np.array([1.0, -1.0])
    zhat, err = denoise_linear(model, x, x, complete_training=False)
    np.testing.assert_allclose(zhat, x, atol=1e-12)
    assert err < 1e-20
    with pytest.raises(ShapeMismatch):
        denoise_linear(model, np.ones(5))


def rec(trial, value, method="micusal", lam=2.0):
    return ResultRecord("r", method, "d_avg", lam, 5, 13, 0.0, 0.1, np.nan, 0, trial, value)


def test_aggregate():
    out = aggregate([rec(0, 1.0), rec(1, 3.0), rec(2, np.nan), rec(0, 5.0, lam=4.0)])
    by_lam = {k[2]: v for k, v in out.items()}
    assert by_lam[2.0] == (2.0, 1.0, 2)
    assert by_lam[4.0] == (5.0, 0.0, 1)


def test_csv_roundtrip(tmp_path):
    records = [rec(1, 0.25), rec(0, 0.125), rec(0, 0.5, method="amicusal")]
    path = tmp_path / "out.csv"
    write_csv(records, path, ["experiment.mode = synth-mcuos"])
    text = path.read_text().splitlines()
    assert text[0] == "# experiment.mode = synth-mcuos"
    assert text[1].startswith("run_id,method,metric,lambda")
    back = read_csv(path)
    assert [(r.method, r.trial, r.value) for r in back] == [
        ("amicusal", 0, 0.5), ("micusal", 0, 0.125), ("micusal", 1, 0.25)]
    assert all(np.isnan(r.sigma_te_sq) for r in back)


def small_config():
    raw = {"experiment": {"mode": "synth-mcuos", "trials": "3", "seed": "11"},
           "data": {"m": "30", "s": "2", "L": "2", "cluster_sizes": "20,20", "t_s": "0.5",
                    "n_test": "5", "sigma_te_sq": "0.05", "missing_frac": "0.0,0.2"},
           "method": {"methods": "micusal,rmicusal", "max_outer_iters": "20", "inner_iters": "20"}}
    return resolve(raw)


def test_experiment_records_and_jobs_independence():
    cfg = small_config()
    serial = run_experiment(cfg, jobs=1)
    parallel = run_experiment(cfg, jobs=2)
    np.testing.assert_equal([r.row() for r in serial], [r.row() for r in parallel])
    metrics = {(r.method, r.metric, r.missing_frac) for r in serial}
    assert ("micusal", "d_avg", 0.0) in metrics
    assert ("rmicusal", "d_avg", 0.2) in metrics
    assert ("micusal", "denoise_error", 0.0) in metrics
    assert ("rmicusal", "clustering_error", 0.2) in metrics
    assert len({r.trial for r in serial}) == 3


def test_experiment_is_reproducible():
    a = run_experiment(small_config(), jobs=1)
    b = run_experiment(small_config(), jobs=1)
    np.testing.assert_equal([r.row() for r in a], [r.row() for r in b])


def test_failures_become_records():
    # 90% missing leaves 3 observed entries, which does not exceed s = 3
    cfg = small_config()
    cfg["method"]["s"] = 3
    cfg["data"]["missing_frac"] = [0.9]
    cfg["method"]["methods"] = ["rmicusal"]
    records = run_experiment(cfg, jobs=1)
    assert {r.metric for r in records} == {"failed:InsufficientObservations"}


def test_aggregate_groups_nan_settings_from_separate_objects():
    import pickle
    records = [pickle.loads(pickle.dumps(rec(t, float(t)))) for t in range(3)]
    assert len(aggregate(records)) == 1
