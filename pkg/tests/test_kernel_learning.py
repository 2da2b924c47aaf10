import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigh

from conftest import planted_data, template_clusters
from mcuos.evaluation import clustering_error
from mcuos.kernel_learning import (assignment_residuals, feature_distance_sq, gkiop,
                                   kernel_assign, kernel_pca_coefficients,
                                   kernel_subspace_update, kernel_scores, mckusal, rmckusal,
                                   whitened_top_eigenvectors)
from mcuos.kernels import KernelSpec, center_matrix, gram
from mcuos.linear import assign_subspaces, micusal
from mcuos.missing import signals_from_array
from mcuos.subspace import subspace_distance


def centered_gram(spec, Y):
    return center_matrix(gram(spec, Y).values)


def ambient_bases(Y, clusters, coeffs):
    Yc = Y - Y.mean(axis=1, keepdims=True)
    return [Yc[:, c] @ E for c, E in zip(clusters, coeffs)]


def test_gkiop_single_point(rng):
    Gc = centered_gram(KernelSpec.gaussian(2.0), rng.standard_normal((3, 8)))
    clusters, coeffs = gkiop(Gc, 1, 1, rng)
    i = clusters[0][0]
    assert clusters[0].shape == (1,)
    assert coeffs[0][0, 0] == pytest.approx(1.0 / np.sqrt(Gc[i, i]))


def test_gkiop_clusters_disjoint(rng):
    Gc = centered_gram(KernelSpec.gaussian(2.0), rng.standard_normal((4, 30)))
    clusters, _ = gkiop(Gc, 4, 5, rng)
    allidx = np.concatenate(clusters)
    assert np.unique(allidx).size == allidx.size == 20


def test_gkiop_planted_blocks():
    r = np.random.default_rng(0)
    A = r.standard_normal((5, 1)) * 3 + 0.2 * r.standard_normal((5, 30))
    B = r.standard_normal((5, 1)) * 3 + 0.2 * r.standard_normal((5, 30))
    Gc = centered_gram(KernelSpec.gaussian(10.0), np.hstack([A, B]))
    pure = 0
    for seed in range(50):
        clusters, _ = gkiop(Gc, 2, 6, np.random.default_rng(seed))
        pure += all(np.all(c < 30) or np.all(c >= 30) for c in clusters)
    assert pure >= 45


def test_kernel_pca_coefficients_orthonormal_in_feature_space(rng):
    Gc = centered_gram(KernelSpec.gaussian(2.0), rng.standard_normal((4, 20)))
    c = np.arange(10)
    E = kernel_pca_coefficients(Gc, c, 3)
    np.testing.assert_allclose(E.T @ Gc[np.ix_(c, c)] @ E, np.eye(3), atol=1e-10)


def test_whitened_solution_matches_explicit_whitening(rng):
    for _ in range(20):
        X = rng.standard_normal((6, 6))
        K = X @ X.T + 0.1 * np.eye(6)
        Bm = rng.standard_normal((6, 6))
        A = Bm @ Bm.T
        E = whitened_top_eigenvectors(A, K, 2)
        w, U = eigh(K)
        Kih = U @ np.diag(w ** -0.5) @ U.T
        ev, V = eigh(Kih @ A @ Kih)
        Eref = Kih @ V[:, ::-1][:, :2]
        np.testing.assert_allclose(E.T @ K @ E, np.eye(2), atol=1e-8)
        Kh = U @ np.diag(w ** 0.5) @ U.T
        np.testing.assert_allclose(Kh @ E @ E.T @ Kh, Kh @ Eref @ Eref.T @ Kh, atol=1e-8)
        ref_vals = eigh(A, K, eigvals_only=True)[::-1][:2]
        np.testing.assert_allclose(np.diag(E.T @ A @ E), ref_vals, rtol=1e-8)


def test_whitening_singular_block_keeps_orthonormality(rng):
    X = rng.standard_normal((6, 3))
    K = X @ X.T
    A = K @ K
    E = whitened_top_eigenvectors(A, K, 2)
    np.testing.assert_allclose(E.T @ K @ E, np.eye(2), atol=1e-8)


def test_update_without_closeness_is_kernel_pca(rng):
    Gc = centered_gram(KernelSpec.gaussian(3.0), rng.standard_normal((4, 24)))
    clusters = [np.arange(12), np.arange(12, 24)]
    coeffs = [kernel_pca_coefficients(Gc, c, 2) for c in clusters]
    new = kernel_subspace_update(Gc, clusters, [np.zeros((12, 2)), coeffs[1]], 0, np.inf, 2)
    K = Gc[np.ix_(clusters[0], clusters[0])]
    P_new = K @ new @ new.T @ K
    P_ref = K @ coeffs[0] @ coeffs[0].T @ K
    np.testing.assert_allclose(P_new, P_ref, atol=1e-8)


def test_update_lambda_zero_moves_towards_other(rng):
    Gc = centered_gram(KernelSpec.gaussian(3.0), rng.standard_normal((4, 24)))
    clusters = [np.arange(12), np.arange(12, 24)]
    coeffs = [kernel_pca_coefficients(Gc, c, 2) for c in clusters]
    before = feature_distance_sq(Gc, clusters[0], coeffs[0], clusters[1], coeffs[1], 2)
    new = kernel_subspace_update(Gc, clusters, coeffs, 0, 0.0, 2)
    after = feature_distance_sq(Gc, clusters[0], new, clusters[1], coeffs[1], 2)
    assert after < before


def test_feature_distance_self_and_identical(rng):
    Gc = centered_gram(KernelSpec.gaussian(3.0), rng.standard_normal((4, 20)))
    c = np.arange(8)
    E = kernel_pca_coefficients(Gc, c, 3)
    assert feature_distance_sq(Gc, c, E, c, E, 3) == pytest.approx(0.0, abs=1e-10)


def test_feature_distance_linear_kernel_matches_ambient(rng):
    Y = rng.standard_normal((6, 20))
    Gc = centered_gram(KernelSpec.polynomial(0.0, 1), Y)
    cl = [np.arange(8), np.arange(8, 20)]
    co = [kernel_pca_coefficients(Gc, c, 2) for c in cl]
    D = ambient_bases(Y, cl, co)
    assert feature_distance_sq(Gc, cl[0], co[0], cl[1], co[1], 2) == pytest.approx(
        subspace_distance(D[0], D[1]) ** 2, abs=1e-10)


def test_assignment_linear_kernel_matches_ambient_rule(rng):
    Y = rng.standard_normal((6, 30))
    Gc = centered_gram(KernelSpec.polynomial(0.0, 1), Y)
    cl = [np.arange(10), np.arange(10, 20), np.arange(20, 30)]
    co = [kernel_pca_coefficients(Gc, c, 2) for c in cl]
    D = ambient_bases(Y, cl, co)
    R = assignment_residuals(Gc, cl, co)
    np.testing.assert_array_equal(np.argmin(R, axis=0),
                                  assign_subspaces(D, Y - Y.mean(axis=1, keepdims=True)))


def test_training_point_query_returns_stored_assignment(rng):
    Y, labels, _ = planted_data(rng, 10, 2, [30, 30], noise=0.01)
    model = mckusal(Y, KernelSpec.gaussian(2.0), 2, 2, rng_seed=0)
    for i in range(0, 60, 7):
        assert kernel_assign(model, i) == model.assignments[i]
        assert kernel_assign(model, Y[:, i]) == model.assignments[i]
    scores = kernel_scores(model, Y[:, :5])
    R = assignment_residuals(model.gram, model.clusters, model.coefficients, np.arange(5))
    np.testing.assert_allclose(scores, R, atol=1e-10)


def test_single_subspace_always_zero(rng):
    Y = rng.standard_normal((4, 20))
    model = mckusal(Y, KernelSpec.gaussian(2.0), 1, 2, rng_seed=0)
    assert np.all(model.assignments == 0)
    assert kernel_assign(model, rng.standard_normal(4)) == 0


def test_single_subspace_is_kernel_pca(rng):
    Y = rng.standard_normal((4, 20))
    model = mckusal(Y, KernelSpec.gaussian(2.0), 1, 3, rng_seed=0)
    Gc = model.gram
    c = model.clusters[0]
    np.testing.assert_array_equal(c, np.arange(20))
    E_ref = kernel_pca_coefficients(Gc, c, 3)
    np.testing.assert_allclose(Gc @ model.coefficients[0] @ model.coefficients[0].T @ Gc,
                               Gc @ E_ref @ E_ref.T @ Gc, atol=1e-8)


def test_mckusal_clusters_template_data(rng):
    X, labels = template_clusters(rng, m=64, n=50, k=10, spread=1.0)
    model = mckusal(X, KernelSpec.gaussian(4.0), 2, 8, lam=20.0, rng_seed=0, restarts=4)
    assert clustering_error(model.assignments, labels) <= 10.0


def test_restarts_keep_smallest_objective(rng):
    X, _ = template_clusters(rng, m=32, n=30, k=8)
    spec = KernelSpec.gaussian(4.0)
    best = mckusal(X, spec, 2, 4, rng_seed=5, restarts=4)
    r = np.random.default_rng(5)
    singles = [mckusal(X, spec, 2, 4, rng_seed=r).objective for _ in range(4)]
    assert best.objective == pytest.approx(min(singles))


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 20), st.integers(1, 3), st.integers(2, 3), st.integers(20, 60),
       st.sampled_from(["gaussian", "polynomial"]), st.integers(0, 2 ** 32 - 1))
def test_f3_non_increasing_except_reinit(m, s, L, N, kind, seed):
    r = np.random.default_rng(seed)
    Y = r.standard_normal((m, N)) / np.sqrt(m)
    spec = KernelSpec.gaussian(1.0) if kind == "gaussian" else KernelSpec.polynomial(1.0, 3)
    model = mckusal(Y, spec, L, s, lam=2.0, rng_seed=r, trace=True, max_outer_iters=10,
                    inner_max_sweeps=5, rel_tol=0.0)
    h = model.history
    for (_, a), (stage, b) in zip(h[:-1], h[1:]):
        if stage != "reinit":
            assert b <= a + 1e-8 * max(1.0, abs(a))


def test_linear_kernel_reproduces_linear_assignments():
    same = 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        m, N, L, s = 5, 40, 2, 2
        Y = r.standard_normal((m, N))
        spec = KernelSpec.polynomial(0.0, 1)
        init = gkiop(centered_gram(spec, Y), L, s, np.random.default_rng(seed))
        km = mckusal(Y, spec, L, s, lam=2.0, max_outer_iters=8, inner_max_sweeps=1,
                     reinit="carry", init=init)
        lm = micusal(Y, L, s, 2.0, max_outer_iters=8, rel_tol=-1,
                     init=ambient_bases(Y, *init))
        k = len(km.assignment_history)
        same += all(np.array_equal(a, b) for a, b in
                    zip(km.assignment_history, lm.assignment_history[:k]))
        D = ambient_bases(Y, km.clusters, km.coefficients)
        fd = feature_distance_sq(km.gram, km.clusters[0], km.coefficients[0], km.clusters[1],
                                 km.coefficients[1], s)
        assert np.sqrt(max(fd, 0.0)) == pytest.approx(subspace_distance(D[0], D[1]), abs=1e-8)
    assert same == 20


def test_rmckusal_full_observation_matches_mckusal(rng):
    Y, _, _ = planted_data(rng, 8, 2, [20, 20], noise=0.05)
    spec = KernelSpec.gaussian(2.0)
    a = mckusal(Y, spec, 2, 2, rng_seed=3)
    b = rmckusal(signals_from_array(Y), spec, 2, 2, rng_seed=3)
    assert not b.psd_repaired
    np.testing.assert_allclose(b.gram_raw, a.gram_raw, atol=1e-12)
    assert len(a.assignment_history) == len(b.assignment_history)
    for x, y in zip(a.assignment_history, b.assignment_history):
        np.testing.assert_array_equal(x, y)
    assert b.objective == pytest.approx(a.objective, abs=1e-8)


def test_rmckusal_with_missing_entries(rng):
    from mcuos.datagen import generate_masks
    X, labels = template_clusters(rng, m=64, n=50, k=10, spread=1.0)
    sigs = signals_from_array(X, generate_masks(64, 100, 0.2, rng))
    model = rmckusal(sigs, KernelSpec.gaussian(4.0), 2, 8, lam=20.0, rng_seed=0, restarts=4)
    assert model.missing
    assert clustering_error(model.assignments, labels) <= 15.0
    assert kernel_assign(model, sigs[0]) in (0, 1)
    scores = kernel_scores(model, sigs[:3])
    assert scores.shape == (2, 3)


def test_reinit_option_validated(rng):
    with pytest.raises(ValueError):
        mckusal(rng.standard_normal((3, 10)), KernelSpec.gaussian(1.0), 2, 1, reinit="other")
