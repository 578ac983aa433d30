import math

import numpy as np
import pytest

from gausslt.hilbert import GridMismatch, L2Vec, builtin_operator, indicator, make_grid
from gausslt.sim import (bridge_path, bridge_paths, covariance, covariance_matrix, integrator_path,
                         integrator_paths, map_replicates, noise_block, pairing, sample_noise)


def test_same_seed_same_noise():
    g = make_grid(16)
    np.testing.assert_array_equal(sample_noise(g, 7).z, sample_noise(g, 7).z)
    assert not np.array_equal(sample_noise(g, 7).z, sample_noise(g, 8).z)
    assert not np.array_equal(sample_noise(g, 7, replicate=1).z, sample_noise(g, 7).z)


def test_pairing_zero_and_linear():
    g = make_grid(16)
    xi = sample_noise(g, 1)
    assert pairing(L2Vec.zeros(g), xi) == 0.0
    f, h = indicator(g, 0, 0.5), indicator(g, 0.25, 1)
    assert pairing(2 * f - h, xi) == pytest.approx(2 * pairing(f, xi) - pairing(h, xi), abs=1e-14)


def test_pairing_isometry_statistical():
    g = make_grid(32)
    rng = np.random.default_rng(0)
    Z = noise_block(g, 11, range(10_000))
    for _ in range(50):
        f = rng.standard_normal(32)
        samples = math.sqrt(g.h) * Z @ f
        var = g.h * f @ f
        se = var * math.sqrt(2.0 / (len(samples) - 1))
        assert abs(samples.var(ddof=1) - var) < 4 * se


def test_batch_matches_single_paths():
    g = make_grid(16)
    A = builtin_operator("perturbation", g, eps=0.5, kernel=lambda t, s: np.cos(t - s))
    X = integrator_paths(A, 3, [0, 5])
    np.testing.assert_allclose(X[1], integrator_path(A, sample_noise(g, 3, 5)).values, atol=1e-14)
    assert X[0, 0] == 0.0


def test_integrator_path_pairing_definition():
    g = make_grid(16)
    A = builtin_operator("volterra", g, kernel=lambda t, s: 1 + t * s)
    xi = sample_noise(g, 4)
    x = integrator_path(A, xi).values
    for k in (0, 5, 16):
        ak = L2Vec(g, A.matrix @ indicator(g, 0, k / 16).coeffs)
        assert x[k] == pytest.approx(pairing(ak, xi), abs=1e-13)


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        integrator_path(builtin_operator("identity", make_grid(8)), sample_noise(make_grid(16), 0))


def test_wiener_variance_at_one():
    g = make_grid(64)
    X = integrator_paths(builtin_operator("identity", g), 2, range(10_000))
    v = X[:, -1]
    assert abs(np.mean(v ** 2) - 1.0) < 3 * np.std(v ** 2, ddof=1) / math.sqrt(len(v))


def test_scaled_identity_variance():
    g = make_grid(8)
    A = 2.0 * builtin_operator("identity", g)
    for t in (0.25, 0.5, 1.0):
        assert covariance(A, t, t) == pytest.approx(4 * t)


def test_complement_projection_pins_endpoint():
    g = make_grid(32)
    Q = builtin_operator("complement_projection", g)
    X = integrator_paths(Q, 9, range(100))
    assert np.max(np.abs(X[:, -1])) < 1e-13


def test_wiener_covariance_is_min():
    g = make_grid(20)
    C = covariance_matrix(builtin_operator("identity", g))
    t = g.nodes
    np.testing.assert_allclose(C, np.minimum.outer(t, t), atol=1e-14)


def test_wiener_increments_independent_gaussian():
    g = make_grid(16)
    X = integrator_paths(builtin_operator("identity", g), 5, range(10_000))
    inc = np.diff(X, axis=1)
    c = np.corrcoef(inc[:, 3], inc[:, 9])[0, 1]
    assert abs(c) < 3 / math.sqrt(10_000)
    assert abs(inc[:, 3].var() - g.h) < 4 * g.h * math.sqrt(2 / 10_000)


def test_sample_covariance_matches_covariance():
    g = make_grid(8)
    A = builtin_operator("perturbation", g, eps=0.8, kernel=lambda t, s: np.exp(-(t - s)))
    X = integrator_paths(A, 6, range(20_000))
    C = covariance_matrix(A)
    S = np.cov(X[:, 1:].T)
    se = np.sqrt((C[1:, 1:] ** 2 + np.outer(np.diag(C)[1:], np.diag(C)[1:])) / 20_000)
    assert np.all(np.abs(S - C[1:, 1:]) < 4.5 * se)


def test_integrator_quadratic_form_bound():
    # E (sum c_k dx_k)^2 = |A sum c_k 1_k|^2 <= sigma_max^2 |sum c_k 1_k|^2
    g = make_grid(16)
    rng = np.random.default_rng(1)
    A = builtin_operator("perturbation", g, eps=1.0, kernel=lambda t, s: np.sin(3 * t * s))
    X = integrator_paths(A, 7, range(20_000))
    inc = np.diff(X, axis=1)
    for _ in range(10):
        c = rng.standard_normal(16)
        samples = inc @ c
        bound = A.sigma_max ** 2 * g.h * c @ c
        assert samples.var() <= bound + 4 * bound * math.sqrt(2 / 20_000)


def test_bridge_endpoint_exact_and_start_zero():
    g = make_grid(32)
    y = bridge_path([1.7], sample_noise(g, 2))
    assert y.values[0] == 0.0 and y.values[-1] == 1.7
    y2 = bridge_path([1.0, -2.0], [sample_noise(g, 2, 0, 0), sample_noise(g, 2, 0, 1)])
    assert y2.dim == 2 and y2.values[1, -1] == -2.0
    with pytest.raises(ValueError):
        bridge_path([1.0, 2.0], sample_noise(g, 0))


def test_bridge_batch_matches_single():
    g = make_grid(16)
    Y = bridge_paths([0.5, 1.0], g, 3, [2])
    y = bridge_path([0.5, 1.0], [sample_noise(g, 3, 2, 0), sample_noise(g, 3, 2, 1)])
    np.testing.assert_allclose(Y[0], y.values, atol=1e-14)


def test_bridge_variance_and_increment_law():
    g = make_grid(20)
    a = 1.5
    Y = bridge_paths([a], g, 8, range(10_000))[:, 0]
    N = Y.shape[0]
    for k in (5, 10, 15):
        t = k / 20
        assert abs(Y[:, k].var(ddof=1) - t * (1 - t)) < 4 * t * (1 - t) * math.sqrt(2 / N)
    d = Y[:, 14] - Y[:, 6]
    D = 8 / 20
    assert abs(d.mean() - a * D) < 3 * math.sqrt(D * (1 - D) / N)
    assert abs(d.var(ddof=1) - D * (1 - D)) < 4 * D * (1 - D) * math.sqrt(2 / N)


def test_bridge_law_equals_projected_integrator():
    # y_a(t) - a t has covariance (Q 1_[0,s], Q 1_[0,t]) = min(s,t) - s t
    g = make_grid(16)
    C = covariance_matrix(builtin_operator("complement_projection", g))
    t = g.nodes
    np.testing.assert_allclose(C, np.minimum.outer(t, t) - np.outer(t, t), atol=1e-12)


def test_map_replicates_independent_of_workers_and_chunk():
    g = make_grid(8)
    A = builtin_operator("identity", g)

    def fn(idx):
        return integrator_paths(A, 1, idx)[:, -1]

    a = map_replicates(fn, 300, workers=1, chunk=64)
    b = map_replicates(fn, 300, workers=4, chunk=7)
    np.testing.assert_array_equal(a, b)
