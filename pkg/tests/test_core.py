import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accessmfs.core import (ConfigurationError, Dataset, GraphPair, Hyperparameters,
                            centering_matrix, l21_norm, label_indicator, laplacian,
                            sparse_laplacian, trace_quadratic)
from conftest import random_stochastic


def test_centering_small_cases():
    assert np.array_equal(centering_matrix(1), [[0.0]])
    assert np.allclose(centering_matrix(2), [[0.5, -0.5], [-0.5, 0.5]], atol=0)


def test_centering_n4_idempotent():
    H = centering_matrix(4)
    assert np.abs(H @ H - H).max() < 1e-12
    assert np.abs(H @ np.ones(4)).max() < 1e-12


@given(st.integers(1, 50))
def test_centering_property(n):
    H = centering_matrix(n)
    assert np.allclose(H, H.T, atol=0)
    assert np.abs(H @ H - H).max() < 1e-12
    assert np.abs(H.sum(axis=1)).max() < 1e-12


def test_laplacian_examples():
    assert np.array_equal(laplacian(np.zeros((3, 3))), np.zeros((3, 3)))
    assert np.array_equal(laplacian([[0, 1], [1, 0]]), [[1, -1], [-1, 1]])


def test_laplacian_random_psd(rng):
    L = laplacian(random_stochastic(rng, 6))
    assert np.linalg.eigvalsh(L).min() >= -1e-10
    assert np.abs(L @ np.ones(6)).max() < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(1, 4), st.integers(0, 2**31))
def test_laplacian_trace_identity(m, c, seed):
    r = np.random.default_rng(seed)
    A = random_stochastic(r, m)
    F = r.standard_normal((m, c))
    L = laplacian(A)
    assert np.abs(L - L.T).max() < 1e-12
    assert np.abs(L.sum(axis=1)).max() < 1e-10
    assert np.linalg.eigvalsh(L).min() >= -1e-10
    sym = 0.5 * (A + A.T)
    pairwise = 0.5 * sum(sym[i, j] * np.sum((F[i] - F[j]) ** 2)
                         for i in range(m) for j in range(m))
    assert trace_quadratic(F, L) == pytest.approx(pairwise, rel=1e-8, abs=1e-12)


def test_graph_pair():
    rng = np.random.default_rng(0)
    gp = GraphPair.from_graphs(random_stochastic(rng, 5), random_stochastic(rng, 3))
    for L in (gp.laplacian_s, gp.laplacian_p):
        assert np.abs(L.sum(axis=1)).max() < 1e-10


def test_l21_norm(rng):
    assert l21_norm(np.zeros((3, 2))) == 0
    assert l21_norm([[3, 4], [0, 0]]) == 5
    M = rng.standard_normal((5, 3))
    loop = 0.0
    for i in range(5):
        loop += sum(M[i, j] ** 2 for j in range(3)) ** 0.5
    assert l21_norm(M) == pytest.approx(loop, rel=1e-14)


def test_label_indicator(rng):
    assert np.array_equal(label_indicator([False] * 3), np.zeros((3, 3)))
    assert np.array_equal(label_indicator([True, False, True]), np.diag([1.0, 0, 1]))
    mask = rng.random(9) < 0.5
    F, Y = rng.standard_normal((9, 3)), rng.standard_normal((9, 3))
    U = label_indicator(mask)
    lhs = np.sum((F[mask] - Y[mask]) ** 2)
    assert lhs == pytest.approx(np.trace((F - Y).T @ U @ (F - Y)), rel=1e-12)
    assert np.trace(U) == mask.sum()


def test_dataset_validation():
    X = np.zeros((3, 4))
    Y = np.zeros((4, 2))
    with pytest.raises(ConfigurationError):
        Dataset(X, Y + 0.5, np.ones(4, bool))
    with pytest.raises(ConfigurationError):
        Dataset(X, Y[:3], np.ones(4, bool))
    with pytest.raises(ConfigurationError):
        Dataset(np.zeros((3, 1)), Y[:1], np.ones(1, bool))
    ds = Dataset(X, np.eye(4)[:, :2], [True, False, True, False])
    assert np.array_equal(ds.working_labels[[1, 3]], np.zeros((2, 2)))
    assert ds.working_labels[0, 0] == 1
    with pytest.raises(ConfigurationError):
        ds.with_mask(np.ones(4, bool)).check_semi_supervised()
    with pytest.raises(ConfigurationError):
        ds.with_mask(np.zeros(4, bool)).check_semi_supervised()


def test_hyperparameter_validation():
    with pytest.raises(ConfigurationError):
        Hyperparameters(lam=0)
    with pytest.raises(ConfigurationError):
        Hyperparameters(theta=-1)
    with pytest.raises(ConfigurationError):
        Hyperparameters(epsilon=0)
    hp = Hyperparameters(k_s=3, k_p=2)
    hp.check_sizes(5, 3)
    with pytest.raises(ConfigurationError):
        hp.check_sizes(4, 3)
    with pytest.raises(ConfigurationError):
        hp.check_sizes(5, 2)


def test_sparse_laplacian_matches_dense(rng):
    A = rng.random((7, 7))
    np.fill_diagonal(A, 0.0)
    assert np.allclose(sparse_laplacian(A).toarray(), laplacian(A), atol=1e-15)
