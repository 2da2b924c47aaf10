import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_basis
from mcuos.exceptions import RankDeficient, ShapeMismatch
from mcuos.subspace import (Subspace, SubspaceCollection, fix_signs, match_subspaces,
                            orthonormalize, project, subspace_distance)


def test_orthonormalize_identity_block():
    M = np.eye(6)[:, :3]
    np.testing.assert_allclose(orthonormalize(M).basis, M)


def test_orthonormalize_unit_vector():
    np.testing.assert_allclose(orthonormalize(np.array([[3.0], [4.0]])).basis, [[0.6], [0.8]])


def test_orthonormalize_spans_input(rng):
    M = rng.standard_normal((10, 3))
    Q = orthonormalize(M).basis
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-12)
    assert np.linalg.norm(M - Q @ Q.T @ M) < 1e-8


def test_orthonormalize_is_deterministic(rng):
    M = rng.standard_normal((8, 3))
    assert np.array_equal(orthonormalize(M).basis, orthonormalize(M.copy()).basis)


def test_orthonormalize_rank_deficient():
    M = np.ones((5, 2))
    with pytest.raises(RankDeficient):
        orthonormalize(M)


def test_subspace_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        Subspace(np.ones((4, 2)))


def test_subspace_is_read_only(rng):
    S = Subspace(random_basis(rng, 5, 2))
    with pytest.raises(ValueError):
        S.basis[0, 0] = 1.0


def test_collection_requires_common_shape(rng):
    with pytest.raises(ShapeMismatch):
        SubspaceCollection([Subspace(random_basis(rng, 5, 2)), Subspace(random_basis(rng, 5, 3))])


def test_fix_signs_first_entry_positive(rng):
    Q = fix_signs(-random_basis(rng, 6, 3))
    first = Q[np.argmax(np.abs(Q) > 1e-12, axis=0), np.arange(3)]
    assert np.all(first > 0)


def test_distance_identical_is_zero(rng):
    D = random_basis(rng, 7, 3)
    assert subspace_distance(D, D) == pytest.approx(0.0, abs=1e-9)


def test_distance_orthogonal_is_sqrt_s():
    s = 3
    I = np.eye(2 * s)
    assert subspace_distance(I[:, :s], I[:, s:]) == pytest.approx(np.sqrt(s))


def test_distance_matches_principal_angles(rng):
    A, B = random_basis(rng, 10, 3), random_basis(rng, 10, 3)
    cos = np.linalg.svd(A.T @ B, compute_uv=False)
    assert subspace_distance(A, B) == pytest.approx(np.sqrt(3 - np.sum(cos ** 2)), abs=1e-12)


def test_distance_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        subspace_distance(random_basis(rng, 6, 2), random_basis(rng, 6, 3))


def test_project_fixed_point_and_orthogonal(rng):
    D = random_basis(rng, 8, 3)
    x = D @ rng.standard_normal(3)
    np.testing.assert_allclose(project(D, x), x, atol=1e-12)
    y = x - D @ (D.T @ rng.standard_normal(8))
    perp = rng.standard_normal(8)
    perp -= D @ (D.T @ perp)
    np.testing.assert_allclose(project(D, perp), 0.0, atol=1e-12)
    z = rng.standard_normal(8)
    assert np.max(np.abs(D.T @ (z - project(D, z)))) < 1e-10
    assert y.shape == (8,)


def test_match_identical_any_order(rng):
    T = [random_basis(rng, 9, 2) for _ in range(4)]
    perm, d = match_subspaces(T[::-1], T)
    assert d == pytest.approx(0.0, abs=1e-7)
    np.testing.assert_array_equal(perm, [3, 2, 1, 0])


def test_match_orthogonal_single_pair():
    I = np.eye(4)
    assert match_subspaces([I[:, :2]], [I[:, 2:]])[1] == pytest.approx(1.0)


def test_match_agrees_with_brute_force_when_greedy_is_optimal(rng):
    checked = 0
    while checked < 20:
        D = [random_basis(rng, 6, 2) for _ in range(3)]
        T = [random_basis(rng, 6, 2) for _ in range(3)]
        d = np.array([[np.sqrt(max(2 - np.sum((a.T @ b) ** 2), 0) / 2) for b in T] for a in D])
        perms = list(itertools.permutations(range(3)))
        costs = [d[np.arange(3), list(p)].mean() for p in perms]
        best = perms[int(np.argmin(costs))]
        perm, davg = match_subspaces(D, T)
        if tuple(perm) != best:
            continue
        assert davg == pytest.approx(min(costs), abs=1e-12)
        checked += 1


# metric axioms ----------------------------------------------------------------

dims = st.tuples(st.integers(2, 9), st.integers(1, 4)).filter(lambda t: t[1] < t[0])


@settings(max_examples=1000, deadline=None)
@given(dims, st.integers(0, 2 ** 32 - 1))
def test_metric_axioms(shape, seed):
    m, s = shape
    r = np.random.default_rng(seed)
    A, B, C = (random_basis(r, m, s) for _ in range(3))
    dab = subspace_distance(A, B)
    assert dab == pytest.approx(subspace_distance(B, A), abs=1e-9)
    assert 0.0 <= dab <= np.sqrt(s) + 1e-9
    assert subspace_distance(A, A) <= 1e-9
    assert dab <= subspace_distance(A, C) + subspace_distance(C, B) + 1e-9
    O, _ = np.linalg.qr(r.standard_normal((s, s)))
    assert subspace_distance(A @ O, B) == pytest.approx(dab, abs=1e-9)
