import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import cdist

from pcgeom.kernel import (PointCloud, build_bandwidths, build_kernel, build_markov,
                           markov_from_points, merge_duplicates)


def test_pointcloud_validation():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        PointCloud(np.array([[0.0, np.nan], [1.0, 2.0]]))
    c = PointCloud(np.arange(6.0).reshape(3, 2))
    assert (c.n, c.d) == (3, 2)


def test_bandwidths_collinear():
    c = PointCloud(np.array([[0.0], [1.0], [3.0]]))
    np.testing.assert_allclose(build_bandwidths(c, 1), [1, 1, 2])


def test_bandwidths_duplicate_is_degenerate():
    with pytest.raises(ValueError, match="degenerate bandwidth"):
        build_bandwidths(PointCloud(np.array([[0.0, 0], [0, 0], [1, 1]])), 1)


def test_bandwidths_circle_against_bruteforce():
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(0, 2 * np.pi, 100))
    X = np.c_[np.cos(t), np.sin(t)]
    D = cdist(X, X)
    oracle = np.sort(D, axis=1)[:, 8]
    rho = build_bandwidths(PointCloud(X), 8)
    np.testing.assert_allclose(rho, oracle, rtol=1e-12)
    # Neighbours come from both sides, so rank 8 sits 4 arc steps away.
    t = 2 * np.pi * np.arange(100) / 100
    r = build_bandwidths(PointCloud(np.c_[np.cos(t), np.sin(t)]), 8)
    spacing = 4 * 2 * np.pi / 100
    assert np.all(np.abs(r - spacing) <= 0.3 * spacing)
    assert np.median(np.abs(rho - spacing)) <= 0.3 * spacing


def test_kernel_identical_points_give_one():
    c = PointCloud(np.array([[0.0, 0.0], [1e-300, 0.0], [1.0, 0.0]]))
    K = build_kernel(c, np.ones(3), knn=2)
    assert K[0, 1] == pytest.approx(1.0)


def test_kernel_matches_dense_formula():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((50, 3))
    c = PointCloud(X)
    rho = build_bandwidths(c, 8)
    K = build_kernel(c, rho, knn=49).toarray()
    dense = np.exp(-cdist(X, X) ** 2 / np.outer(rho, rho))
    assert np.abs(K - dense).max() <= 1e-14


def test_kernel_symmetric_and_sparse():
    X = np.random.default_rng(2).uniform(size=(300, 2))
    K = build_kernel(PointCloud(X), build_bandwidths(PointCloud(X), 8), knn=10)
    assert abs(K - K.T).max() == 0.0
    assert np.diff(K.indptr).max() <= 2 * 11


def test_markov_two_by_two():
    m = build_markov(sp.csr_matrix(np.ones((2, 2))))
    np.testing.assert_allclose(m.P.toarray(), 0.5)
    np.testing.assert_allclose(m.mu, [0.5, 0.5])


def test_markov_isolated_point():
    K = sp.csr_matrix(np.array([[1.0, 0], [0, 0]]))
    with pytest.raises(ValueError, match="isolated point"):
        build_markov(K)


def test_stationarity_random_symmetric():
    A = np.random.default_rng(3).uniform(size=(10, 10))
    m = build_markov(sp.csr_matrix(A + A.T))
    assert np.abs(m.mu @ m.P.toarray() - m.mu).max() <= 1e-12


def _check_invariants(m):
    P = m.P.toarray()
    assert np.abs(P.sum(1) - 1).max() <= 1e-12
    assert abs(m.mu.sum() - 1) <= 1e-12 and np.all(m.mu > 0) and np.all(m.rho > 0)
    F = m.mu[:, None] * P
    assert np.all(np.abs(F - F.T) <= 1e-10 * np.maximum(F, F.T) + 1e-300)
    assert np.abs(m.mu @ P - m.mu).max() <= 1e-10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 3), st.integers(2, 16))
def test_markov_invariants_property(seed, d, knn):
    X = np.random.default_rng(seed).standard_normal((60, d))
    _check_invariants(markov_from_points(X, knn=knn, neighbor_rank=min(4, knn)))


def test_self_adjoint_and_spectrum():
    X = np.random.default_rng(4).standard_normal((200, 2))
    m = markov_from_points(X)
    rng = np.random.default_rng(5)
    for _ in range(20):
        f, h = rng.standard_normal((2, 200))
        a = np.dot(m.mu * (m.P @ f), h)
        b = np.dot(m.mu * f, m.P @ h)
        assert abs(a - b) <= 1e-10 * max(abs(a), 1e-12)
    w = np.linalg.eigvals(m.P.toarray())
    assert np.abs(w.imag).max() < 1e-8
    assert abs(w.real.max() - 1) < 1e-8 and w.real.min() >= -1 - 1e-8


def test_merge_duplicates_folds_mass():
    X = np.array([[0.0, 0], [1, 0], [0, 0], [0, 1]])
    u, w, inv = merge_duplicates(X)
    assert len(u) == 3 and w.sum() == 4
    np.testing.assert_array_equal(u[inv], X)
    m = markov_from_points(u, knn=2, neighbor_rank=1, weights=w)
    _check_invariants(m)
    assert m.mu[np.argmax(w)] == m.mu.max()


def test_density_bandwidth_option():
    X = np.random.default_rng(6).standard_normal((300, 2))
    m = markov_from_points(X, bandwidth="density")
    _check_invariants(m)
    with pytest.raises(ValueError):
        markov_from_points(X, bandwidth="bogus")
