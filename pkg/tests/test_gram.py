import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from gausslt.gram import (VerifyReport, check_delta_product_identity, check_density_bound,
                          check_gram_lower_bound, check_inverse_gram_quadratic, check_projection_transfer,
                          check_singularity_integrability, dual_vector, gram_det, gram_matrix,
                          indicator_gram_bound, log_transform_delta_product, log_transform_integrated_product,
                          log_transform_integrated_product_reduced, merge_reports, nondeterminism_ratio,
                          pivoted_cholesky, project, singularity_majorant, synthesize_matching_pair)
from gausslt.hilbert import L2Operator, L2Vec, builtin_operator, indicator, inner, make_grid

seeds = st.integers(0, 2**32 - 1)


def randvecs(rng, grid, k):
    return [L2Vec(grid, rng.standard_normal(grid.n_cells)) for _ in range(k)]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), seeds)
def test_pivoted_cholesky_reconstructs(k, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((k, k + 3))
    G = X @ X.T
    L, piv, pivots = pivoted_cholesky(G)
    assert len(pivots) == k
    np.testing.assert_allclose(L @ L.T, G[np.ix_(piv, piv)], rtol=1e-10, atol=1e-10)
    assert np.prod(pivots) == pytest.approx(np.linalg.det(G), rel=1e-8)


def test_gram_det_nested_indicators_oracle():
    # G(1_[0,t_1], ..., 1_[0,t_n]) = t_1 (t_2 - t_1) ... (t_n - t_{n-1})
    g = make_grid(100)
    ts = [0.1, 0.35, 0.5, 0.92]
    fam = [indicator(g, 0, t) for t in ts]
    assert gram_det(fam) == pytest.approx(np.prod(np.diff([0] + ts)), rel=1e-12)


def test_gram_det_edge_cases():
    g = make_grid(8)
    assert gram_det([]) == 1.0
    a = indicator(g, 0, 0.5)
    assert gram_det([a, 2.0 * a]) == 0.0
    assert gram_det([a, indicator(g, 0.5, 1)]) == pytest.approx(0.25)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), seeds)
def test_project_is_orthogonal_projection(k, seed):
    rng = np.random.default_rng(seed)
    g = make_grid(12)
    vs = randvecs(rng, g, k)
    h = L2Vec(g, rng.standard_normal(12))
    p = project(vs, h)
    for v in vs:
        assert inner(h - p, v) == pytest.approx(0, abs=1e-9)
    np.testing.assert_allclose(project(vs, p).coeffs, p.coeffs, atol=1e-9)


def test_project_handles_dependent_family():
    g = make_grid(8)
    a = indicator(g, 0, 0.5)
    h = indicator(g, 0, 0.75)
    np.testing.assert_allclose(project([a, 3.0 * a], h).coeffs, project([a], h).coeffs)


def _conditional_variance_product(C):
    """prod_m Var(y_m | y_1..y_{m-1}) / Var(y_m - y_{m-1}) via explicit regression."""
    m = C.shape[0]
    out = 1.0
    for i in range(1, m):
        coef = np.linalg.lstsq(C[:i, :i], C[:i, i], rcond=None)[0]
        cond = C[i, i] - C[:i, i] @ coef
        inc = C[i, i] + C[i - 1, i - 1] - 2 * C[i - 1, i]
        out *= cond / inc
    return out


def test_nondeterminism_ratio_wiener_is_one():
    g = make_grid(64)
    r = nondeterminism_ratio(lambda t: indicator(g, 0, t), [0.1, 0.3, 0.5, 0.9])
    assert r == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_nondeterminism_ratio_regression_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 32
    g = make_grid(n)
    A = L2Operator(g, np.eye(n) + 0.3 * rng.standard_normal((n, n)) / math.sqrt(n))
    idx = np.sort(rng.choice(np.arange(1, n + 1), 4, replace=False))
    times = idx / n
    r = nondeterminism_ratio(lambda t: L2Vec(g, A.cumulative[:, g.snap(t)]), times)
    C = g.h * A.cumulative[:, idx].T @ A.cumulative[:, idx]
    assert r == pytest.approx(_conditional_variance_product(C), rel=1e-7)


def test_nondeterminism_ratio_rejects_bad_times():
    g = make_grid(8)
    with pytest.raises(ValueError):
        nondeterminism_ratio(lambda t: indicator(g, 0, t), [0.5, 0.25])


def test_verify_report_formats():
    r = VerifyReport.from_margin("x", -1e-3, 1e-8, {"a": np.arange(2)}, seed=3)
    assert not r.passed and r.status == "fail"
    assert r.csv_row() == ["x", "1", repr(-1e-3), "3", "fail"]
    assert '"a"' in r.witness_json()
    m = merge_reports([VerifyReport.from_margin("x", 0.5, 0), r, VerifyReport.from_margin("x", 0.1, 0)])
    assert m.trials == 3 and m.worst_margin == -1e-3 and not m.passed


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(1, 5), seeds)
def test_gram_lower_bound_property(n, k, seed):
    rng = np.random.default_rng(seed)
    A = L2Operator(make_grid(n), rng.standard_normal((n, n)) + 3 * np.eye(n))
    if not A.is_invertible:
        return
    r = check_gram_lower_bound(A, randvecs(rng, A.grid, min(k, n)))
    assert r.passed, r.summary()


def test_gram_lower_bound_tight_for_scaled_identity():
    g = make_grid(6)
    r = check_gram_lower_bound(2.0 * builtin_operator("identity", g), randvecs(np.random.default_rng(1), g, 3))
    assert r.worst_margin == pytest.approx(0, abs=1e-12)


def test_inverse_gram_quadratic_wiener_equality():
    # for A = I and nested indicators the bound is an identity
    g = make_grid(16)
    es = [indicator(g, 0, t) for t in (0.25, 0.5, 1.0)]
    r = check_inverse_gram_quadratic(builtin_operator("identity", g), es, [0.3, -1.0, 2.0])
    assert r.passed and abs(r.worst_margin) < 1e-12


def test_inverse_gram_quadratic_rejects_nonorthogonal():
    g = make_grid(8)
    es = randvecs(np.random.default_rng(0), g, 3)
    with pytest.raises(ValueError, match="orthogonal"):
        check_inverse_gram_quadratic(builtin_operator("identity", g), es, [1, 2, 3])


def test_density_bound_against_scipy_density():
    g = make_grid(16)
    rng = np.random.default_rng(5)
    A = L2Operator(g, np.eye(16) + 0.2 * rng.standard_normal((16, 16)))
    times, us = [0.25, 0.5, 1.0], [0.1, -0.4, 0.3]
    r = check_density_bound(A, times, us)
    idx = [4, 8, 16]
    C = g.h * A.cumulative[:, idx].T @ A.cumulative[:, idx]
    assert r.witness["log_density"] == pytest.approx(stats.multivariate_normal(cov=C).logpdf(us), rel=1e-10)
    assert r.passed


def test_projection_transfer_synthesized_pairs():
    rng = np.random.default_rng(2)
    g = make_grid(10)
    Q = builtin_operator("complement_projection", g)
    for _ in range(20):
        es = randvecs(rng, g, 3)
        gv = L2Vec(g, rng.standard_normal(10))
        f = synthesize_matching_pair(Q, es, gv)
        assert check_projection_transfer(Q, es, f, gv).passed


def test_projection_transfer_rejects_unmatched():
    g = make_grid(6)
    Q = builtin_operator("complement_projection", g)
    es = randvecs(np.random.default_rng(0), g, 2)
    with pytest.raises(ValueError):
        check_projection_transfer(Q, es, es[0], es[1])


def test_indicator_gram_bound_disjoint_is_equality():
    g = make_grid(128)
    sets = [indicator(g, 0, 0.25), indicator(g, 0.25, 0.5), indicator(g, 0.5, 1.0)]
    r = indicator_gram_bound(sets)
    assert r.witness["gamma"] == pytest.approx(r.witness["residual_product"], rel=1e-12)
    with pytest.raises(ValueError):
        indicator_gram_bound([L2Vec(g, np.full(128, 0.5))])


def test_singularity_integral_closed_form_and_quad():
    g = make_grid(50)
    for alpha in (0.0, 0.5, 0.9):
        beta = 0.5 * (1 + alpha)
        assert check_singularity_integrability(L2Vec.zeros(g), alpha) == pytest.approx(1 / (1 - beta), rel=1e-12)
    rng = np.random.default_rng(3)
    y = L2Vec(g, 0.4 * rng.standard_normal(50))
    alpha = 0.6

    def q(t):
        c = np.zeros(50)
        k = int(t * 50)
        c[:k] = 1
        c[k:k + 1] = t * 50 - k if k < 50 else 0
        # |1_[0,t] - y|^2 with the partial cell integrated exactly
        full = g.h * np.sum((c[:k] - y.coeffs[:k]) ** 2) + g.h * np.sum(y.coeffs[k + 1:] ** 2)
        if k < 50:
            frac = t * 50 - k
            full += g.h * (frac * (1 - y.coeffs[k]) ** 2 + (1 - frac) * y.coeffs[k] ** 2)
        return full ** (-(1 + alpha) / 2)

    ref, _ = integrate.quad(q, 0, 1, points=np.arange(1, 50) / 50, limit=500)
    assert check_singularity_integrability(y, alpha) == pytest.approx(ref, rel=1e-8)


def test_singularity_majorant_value():
    b, M = singularity_majorant(0.5)
    assert b == pytest.approx(2 ** 1.5)
    assert M == pytest.approx(b + 4 * b ** (1 - 4 / 3) / (4 / 3 - 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), seeds)
def test_delta_product_transform_is_gaussian_density(k, seed):
    # transform of prod delta((r_j, xi)) at h is the N(0, G(r)) density at -(r_j, h)
    rng = np.random.default_rng(seed)
    g = make_grid(12)
    rs = randvecs(rng, g, k)
    h = L2Vec(g, rng.standard_normal(12))
    G = gram_matrix(rs)
    b = np.array([inner(r, h) for r in rs])
    oracle = stats.multivariate_normal(cov=G).logpdf(-b)
    assert log_transform_delta_product(rs, h) == pytest.approx(oracle, rel=1e-8, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), seeds)
def test_delta_product_identity_property(k, seed):
    rng = np.random.default_rng(seed)
    g = make_grid(16)
    fs = randvecs(rng, g, k)
    hs = randvecs(rng, g, 3)
    r = check_delta_product_identity(fs, hs)
    assert r.passed, r.witness
    f = dual_vector(fs)
    for fk in fs:
        assert inner(f, fk) == pytest.approx(1.0, rel=1e-9)
    for h in hs:
        assert log_transform_integrated_product(fs, h) == pytest.approx(
            log_transform_integrated_product_reduced(fs, h), rel=1e-9, abs=1e-9)


def test_delta_product_identity_needs_two():
    with pytest.raises(ValueError):
        check_delta_product_identity([indicator(make_grid(4), 0, 0.5)])
