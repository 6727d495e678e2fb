import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pcgeom import shapes
from pcgeom.carre_du_champ import (KForm, Tensor02, admissible_pair_fraction, cdc_pair, compound,
                                   gamma_blocks, gram, gram_2tensor, kform_metric, multi_indices,
                                   permutation_sign, pointwise_inner, rank_multi_index,
                                   sym_embedding, visualize_form, wedge)
from pcgeom.function_space import eigenbasis
from pcgeom.kernel import markov_from_points

from conftest import build


def test_multi_index_rank_is_lexicographic():
    for d, k in [(3, 1), (4, 2), (5, 3), (6, 2)]:
        Js = multi_indices(d, k)
        assert Js == sorted(Js)
        assert [rank_multi_index(J, d) for J in Js] == list(range(comb(d, k)))


def test_permutation_sign():
    assert permutation_sign((0, 1, 2)) == 1
    assert permutation_sign((1, 0, 2)) == -1
    assert permutation_sign((2, 0, 1)) == 1
    assert permutation_sign((0, 0)) == 0


def test_cdc_constant_and_nonnegative(circle):
    X, model, _, _ = circle
    f = np.random.default_rng(0).standard_normal(len(X))
    assert np.abs(cdc_pair(model, f, np.full(len(X), 3.0))).max() <= 1e-12
    assert cdc_pair(model, f, f).min() >= -1e-12


def test_cdc_flat_grid_limit():
    g = np.linspace(0, 1, 40)
    X = np.array(np.meshgrid(g, g)).reshape(2, -1).T
    model = markov_from_points(X)
    inner = np.all((X > 0.2) & (X < 0.8), axis=1)
    gxy = cdc_pair(model, X[:, 0], X[:, 1])[inner]
    gxx = cdc_pair(model, X[:, 0], X[:, 0])[inner]
    gyy = cdc_pair(model, X[:, 1], X[:, 1])[inner]
    assert abs(np.mean(np.abs(gxy))) <= 0.05
    r = gxx / gyy
    assert 0.8 <= r.min() and r.max() <= 1.25


def test_uncentred_variant_runs(circle):
    X, model, _, _ = circle
    a = cdc_pair(model, X[:, 0], X[:, 0], centred=False)
    b = cdc_pair(model, X[:, 0], X[:, 0])
    assert a.shape == b.shape and np.all(a >= b - 1e-12)


def test_cauchy_schwarz(circle):
    X, model, _, _ = circle
    rng = np.random.default_rng(1)
    for _ in range(5):
        f, h = rng.standard_normal((2, len(X)))
        assert np.all(cdc_pair(model, f, h) ** 2
                      <= cdc_pair(model, f, f) * cdc_pair(model, h, h) + 1e-10)


def test_gamma_blocks_psd_and_shapes(circle):
    X, model, basis, gt = circle
    assert gt.gamma_cc.shape == (len(X), 2, 2)
    assert gt.gamma_cb.shape == (len(X), 2, basis.n0)
    assert np.linalg.eigvalsh(gt.gamma_cc).min() >= -1e-10
    assert np.linalg.eigvalsh(gt.gamma_bb).min() >= -1e-10 * np.abs(gt.gamma_bb).max()
    assert np.abs(gt.gamma_cb[:, :, 0]).max() <= 1e-12 * np.abs(gt.gamma_cb).max()


def test_circle_trace_spread():
    X = shapes.circle(1000, regular=True)
    _, _, gt = build(X)
    tr = np.trace(gt.gamma_cc, axis1=1, axis2=2)
    assert tr.max() / tr.min() < 3


def test_random_circle_trace_spread(circle):
    gt = circle[3]
    tr = np.trace(gt.gamma_cc, axis1=1, axis2=2)
    lo, hi = np.percentile(tr, [5, 95])
    assert hi / lo < 3


def test_nested_blocks_match_direct(small_square):
    X, model, basis, gt = small_square
    inner = gt.cdc(X[:, 1], basis.U[:, 4])
    np.testing.assert_allclose(gt.gamma_c_cb[:, 0, 1, 4], cdc_pair(model, X[:, 0], inner), atol=1e-12)
    inner = gt.cdc(X[:, 0], X[:, 1])
    np.testing.assert_allclose(gt.gamma_b_cc[:, 3, 0, 1], cdc_pair(model, basis.U[:, 3], inner),
                               atol=1e-12)


def test_coordinate_options(small_square):
    X, model, basis, _ = small_square
    s = gamma_blocks(model, basis, X, 10, coords="smooth")
    np.testing.assert_allclose(s.coords, model.P @ X)
    np.testing.assert_array_equal(s.points, X)
    p = gamma_blocks(model, basis, X, 10, coords="projected")
    np.testing.assert_allclose(p.coords, basis.U @ basis.project(X), atol=1e-12)
    with pytest.raises(ValueError):
        gamma_blocks(model, basis, X, 10, coords="nope")
    with pytest.raises(ValueError):
        gamma_blocks(model, basis, X, basis.n0 + 1)


def _psd(rng, d, n=4):
    A = rng.standard_normal((n, d, d))
    return A @ A.transpose(0, 2, 1)


def test_compound_minors_and_spectrum():
    rng = np.random.default_rng(2)
    M = _psd(rng, 3)
    np.testing.assert_allclose(compound(M, 0), 1.0)
    np.testing.assert_array_equal(compound(M, 1), M)
    C2 = compound(M, 2)
    for p in range(len(M)):
        for a, J in enumerate(multi_indices(3, 2)):
            for b, K in enumerate(multi_indices(3, 2)):
                assert C2[p, a, b] == pytest.approx(np.linalg.det(M[p][np.ix_(J, K)]), abs=1e-12)
        w = np.linalg.eigvalsh(M[p])
        for k in (2, 3):
            prods = sorted(np.prod(c) for c in itertools.combinations(w, k))
            np.testing.assert_allclose(np.linalg.eigvalsh(compound(M[p], k)), prods,
                                       rtol=1e-9, atol=1e-9 * w.max() ** k)


def test_compound_cauchy_binet_branch():
    rng = np.random.default_rng(3)
    M = _psd(rng, 5, n=2)
    C4 = compound(M, 4)
    for a, J in enumerate(multi_indices(5, 4)):
        for b, K in enumerate(multi_indices(5, 4)):
            np.testing.assert_allclose(C4[:, a, b], np.linalg.det(M[:, J][:, :, K]), rtol=1e-8,
                                       atol=1e-8 * np.abs(M).max() ** 4)


def test_kform_metric_degrees(small_square):
    gt = small_square[3]
    np.testing.assert_array_equal(kform_metric(gt, 0), np.ones((gt.n, 1, 1)))
    np.testing.assert_array_equal(kform_metric(gt, 1), gt.gamma_cc)
    with pytest.raises(ValueError):
        kform_metric(gt, 3)


@pytest.fixture(scope="module")
def torus_small():
    X = shapes.torus(1200, seed=4)
    return (X,) + build(X, n0=20, n1=8)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_gram_symmetric_psd_and_consistent(torus_small, k):
    gt = torus_small[3]
    G = gram(gt, k)
    assert np.abs(G - G.T).max() <= 1e-10 * np.abs(G).max()
    assert np.linalg.eigvalsh(G).min() >= -1e-8 * np.abs(G).max()
    rng = np.random.default_rng(k)
    a, b = rng.standard_normal((2, G.shape[0]))
    naive = np.sum(pointwise_inner(gt, a, b, k) * gt.mu)
    assert a @ G @ b == pytest.approx(naive, rel=1e-10, abs=1e-12)


def test_gram_frame_bound_circle_and_torus(circle, torus_small):
    for gt in (circle[3], torus_small[3]):
        B = np.linalg.eigvalsh(gram(gt, 1)).max()
        assert B <= np.trace(gt.gamma_cc, axis1=1, axis2=2).max() + 1e-8


def test_gram_2tensor_d1_and_symmetric_variant(torus_small):
    X = np.linspace(0, 1, 80)[:, None]
    _, _, gt1 = build(X, n0=10, n1=5, knn=10)
    G = gram_2tensor(gt1)
    w = gt1.gamma_cc[:, 0, 0] ** 2 * gt1.mu
    np.testing.assert_allclose(G, (gt1.U1 * w[:, None]).T @ gt1.U1, atol=1e-14)
    gt = torus_small[3]
    Gf, Gs = gram_2tensor(gt), gram_2tensor(gt, symmetric=True)
    assert np.linalg.eigvalsh(Gs).min() >= -1e-8 * np.abs(Gs).max()
    c = np.random.default_rng(5).standard_normal(Gs.shape[0])
    full = Tensor02(c, symmetric=True).full(gt.d)
    assert c @ Gs @ c == pytest.approx(full @ Gf @ full, rel=1e-10)


def test_sym_embedding_places_both_entries():
    E = sym_embedding(3)
    assert E.shape == (9, 6)
    np.testing.assert_array_equal(E.sum(0), [1, 2, 2, 1, 2, 1])


def test_wedge_antisymmetry_and_bilinearity(torus_small):
    gt = torus_small[3]
    rng = np.random.default_rng(6)
    a, b, c = (KForm(1, rng.standard_normal(gt.n1 * 3)) for _ in range(3))
    aa = wedge(a, a, gt).coeffs
    assert np.abs(aa).max() <= 1e-8 * np.abs(a.coeffs).max() ** 2
    np.testing.assert_allclose(wedge(a, b, gt).coeffs, -wedge(b, a, gt).coeffs, atol=1e-10)
    np.testing.assert_allclose(wedge(a + 2.0 * c, b, gt).coeffs,
                               wedge(a, b, gt).coeffs + 2 * wedge(c, b, gt).coeffs, atol=1e-10)
    with pytest.raises(ValueError):
        wedge(wedge(a, b, gt), wedge(a, c, gt), gt)


def test_wedge_plane_coefficients():
    X = shapes.flat_square(400, seed=0)
    _, basis, gt = build(X, n0=10, n1=4)
    dx = np.zeros(gt.n1 * 2)
    dy = np.zeros(gt.n1 * 2)
    c0 = 1.0 / basis.U[0, 0]
    dx[0], dy[1] = c0, c0
    w = wedge(KForm(1, dx), KForm(1, dy), gt).coeffs
    # dx ^ dy = 1 dx_(0,1); the dx ^ dx term is absent.
    np.testing.assert_allclose(basis.U[:, :4] @ w, 1.0, atol=1e-10)


def test_admissible_fraction():
    assert admissible_pair_fraction(10, 3, 3) == pytest.approx(35 / 120)
    assert admissible_pair_fraction(2, 1, 1) == pytest.approx(0.5)


def test_visualize(torus_small, circle):
    gt = torus_small[3]
    z = visualize_form(KForm(1, np.zeros(gt.n1 * 3)), gt)
    assert np.all(z.vectors == 0)
    a = np.random.default_rng(7).standard_normal(gt.n1 * 3)
    v = visualize_form(KForm(1, a), gt)
    from pcgeom.carre_du_champ import vector_field_arrows
    np.testing.assert_allclose(v.vectors, vector_field_arrows(gt, a))
    b = visualize_form(KForm(2, np.random.default_rng(8).standard_normal(gt.n1 * 3)), gt)
    T = b.tensor
    np.testing.assert_allclose(T, -T.transpose(0, 2, 1))
    # The plane pair (u, v) with magnitude s reproduces T = s (v u^T - u v^T).
    u, w = b.plane[:, 0], b.plane[:, 1]
    R = b.magnitude[:, None, None] * (np.einsum("pi,pj->pij", u, w) - np.einsum("pi,pj->pij", w, u))
    np.testing.assert_allclose(R, T, atol=1e-10 * np.abs(T).max())
    s = visualize_form(KForm(3, np.ones(gt.n1)), gt)
    assert s.scalar.shape == (gt.n,)
    gt2 = circle[3]
    p = visualize_form(KForm(2, np.ones(gt2.n1)), gt2)
    np.testing.assert_allclose(p.tensor[:, 0, 1], p.magnitude)
    np.testing.assert_allclose(p.tensor[:, 1, 0], -p.magnitude)
    with pytest.raises(ValueError, match="no visual reduction"):
        visualize_form(KForm(0, np.ones(gt.n1)), gt)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_compound_psd_property(seed):
    M = _psd(np.random.default_rng(seed), 3, n=1)
    for k in (1, 2, 3):
        assert np.linalg.eigvalsh(compound(M, k)).min() >= -1e-9 * max(1.0, np.abs(M).max() ** k)
