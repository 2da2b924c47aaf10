import numpy as np
import pytest


def random_basis(rng, m, s):
    Q, _ = np.linalg.qr(rng.standard_normal((m, s)))
    return Q


def planted_data(rng, m, s, sizes, noise=0.0, spread=None):
    """Points on independent random subspaces (or a chain when ``spread`` is set)."""
    bases, blocks, labels = [], [], []
    for l, n in enumerate(sizes):
        if spread is None or not bases:
            T = random_basis(rng, m, s)
        else:
            T, _ = np.linalg.qr(bases[-1] + spread * rng.uniform(size=(m, s)))
        bases.append(T)
        blocks.append(T @ rng.standard_normal((s, n)))
        labels.append(np.full(n, l))
    X = np.hstack(blocks)
    X /= np.linalg.norm(X, axis=0)
    if noise:
        X = X + rng.normal(0, np.sqrt(noise / m), X.shape)
    return X, np.concatenate(labels), bases


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def template_clusters(rng, m=256, n=120, k=30, spread=0.8, noise=0.02, L=2):
    """Digit-like classes: a nonnegative template plus ``k``-dimensional variation.

    Every class has intrinsic dimension ``k``, so a single feature-space
    subspace cannot absorb two classes when ``s < 2k``.
    """
    X, labels = [], []
    for l in range(L):
        mu = np.abs(rng.standard_normal(m))
        mu /= np.linalg.norm(mu)
        B, _ = np.linalg.qr(rng.standard_normal((m, k)))
        P = (mu[:, None] + spread / np.sqrt(k) * B @ rng.standard_normal((k, n))
             + noise / np.sqrt(m) * rng.standard_normal((m, n)))
        X.append(P)
        labels.append(np.full(n, l))
    X = np.hstack(X)
    X /= np.linalg.norm(X, axis=0)
    return X, np.concatenate(labels)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
