import numpy as np
import pytest
import scipy.sparse as sp
from scipy.linalg import eigh

from aetlab.recon_power import (SpectralTikhonov, error_curve, m_norm, optimal_beta_search,
                                tikhonov_solve)


@pytest.fixture(scope="module")
def ops(tiny):
    """Exact, assumed and mismatched (mu = 0.05) operators on the tiny setup."""
    exact = tiny.forward(tiny.sound_speed(mu=0.0))
    assumed = tiny.forward(tiny.assumed_speed())
    mism = tiny.forward(tiny.sound_speed(mu=0.05, seed=0))
    return exact, assumed, mism


def test_diagonal_toy():
    k = np.array([3.0, 1.0, 0.5, 0.1])
    I = np.array([1.0, -2.0, 0.3, 4.0])
    beta = 0.2
    expect = k * I / (k ** 2 + beta)
    res = tikhonov_solve(np.diag(k), I, beta, np.eye(4))
    assert np.allclose(res.h, expect, rtol=1e-9)
    assert res.normal_residual <= 1e-8
    assert np.allclose(SpectralTikhonov(np.diag(k), np.eye(4)).solve(I, beta).h, expect)


def test_dominant_regularizer(ops, tiny):
    K = ops[1]
    I = K @ tiny.H_true[0]
    spec = SpectralTikhonov(K, tiny.M)
    beta = 1e12 * spec.lam.max()  # ||K||^2 measured in the M metric
    res = tikhonov_solve(K, I, beta, tiny.M, mass_solve=tiny.mass_factor.solve)
    g = K.matrix.T @ I
    dual = np.sqrt(g @ tiny.mass_factor.solve(g))  # ||K^T I|| in the dual M metric
    assert m_norm(tiny.M, res.h) <= 1e-6 * dual / spec.lam.max()


def test_invalid_inputs():
    with pytest.raises(ValueError):
        tikhonov_solve(np.eye(3), np.ones(3), 0.0, np.eye(3))
    with pytest.raises(ValueError):
        tikhonov_solve(np.eye(3), np.ones(4), 1.0, np.eye(3))
    with pytest.raises(ValueError):
        SpectralTikhonov(np.eye(3), np.eye(3)).solve(np.ones(3), -1.0)


def test_spectral_matches_cg(ops, tiny):
    K = ops[2]
    I = K @ tiny.H_true[0]
    spec = SpectralTikhonov(ops[1], tiny.M, mass_solve=tiny.mass_factor.solve)
    assert spec.mode == "nodes"
    for beta in (1e-6, 1e-4):
        a = tikhonov_solve(ops[1], I, beta, tiny.M, mass_solve=tiny.mass_factor.solve)
        b = spec.solve(I, beta)
        assert a.normal_residual <= 1e-8 and b.normal_residual <= 1e-8
        assert m_norm(tiny.M, a.h - b.h) <= 1e-6 * m_norm(tiny.M, a.h)


def test_data_space_mode(rng):
    A = rng.standard_normal((5, 30))
    M = sp.diags(rng.uniform(0.5, 2.0, 30)).tocsr()
    I = rng.standard_normal(5)
    spec = SpectralTikhonov(A, M)
    assert spec.mode == "data"
    res = spec.solve(I, 0.3)
    assert res.normal_residual <= 1e-10
    ref = np.linalg.solve(A.T @ A + 0.3 * M.toarray(), A.T @ I)
    assert np.allclose(res.h, ref)


def test_noiseless_toy_hits_floor():
    k = np.array([2.0, 1.0, 0.3])
    h = np.array([1.0, 1.0, 1.0])
    curve = error_curve(np.diag(k), k * h, h, np.eye(3), np.linspace(2, -8, 11))
    assert np.all(np.diff(curve) <= 0)
    beta, res = optimal_beta_search(np.diag(k), k * h, h, np.eye(3))
    assert res.at_lower_bound and beta == pytest.approx(1e-8)


def test_exact_speed_reconstruction(ops, tiny):
    K = ops[0]
    for H in tiny.H_true:
        beta, res = optimal_beta_search(K, K @ H, H, tiny.M)
        assert res.error / m_norm(tiny.M, H) < 0.05


def test_mismatch_interior_optimum(ops, tiny):
    H = tiny.H_true[0]
    I = ops[2] @ H
    solver = SpectralTikhonov(ops[1], tiny.M)
    beta, res = optimal_beta_search(ops[1], I, H, tiny.M, solver=solver)
    assert not res.at_lower_bound
    lb = np.log10(beta)
    assert -8 < lb < 2
    grid = np.linspace(-8, 2, 101)
    curve = error_curve(ops[1], I, H, tiny.M, grid, solver)
    k = int(np.argmin(curve))
    # unimodal: nonincreasing up to the minimum, nondecreasing after it
    assert np.all(np.diff(curve[:k + 1]) <= 1e-12)
    assert np.all(np.diff(curve[k:]) >= -1e-12)
    assert abs(grid[k] - lb) <= 0.1 + 1e-9
    assert res.error / m_norm(tiny.M, H) <= curve[k] + 1e-9


def test_resolvent_bound(ops, tiny):
    K = ops[1].matrix
    for beta in (1e-6, 1e-3):
        A = K.T @ K + beta * tiny.M.toarray()
        top = eigh(tiny.M.toarray(), A, eigvals_only=True)[-1]
        assert top <= (1 + 1e-6) / beta


def test_noise_raises_optimal_beta(ops, tiny):
    K = ops[0]
    H = tiny.H_true[0]
    I = K @ H
    noise = np.random.default_rng(5).standard_normal(I.size)
    noisy = I + 1e-3 * np.linalg.norm(I) * noise / np.linalg.norm(noise)
    solver = SpectralTikhonov(K, tiny.M)
    # widened bracket: on [1e-8, 1e2] both optima are clipped to the floor here
    b0, _ = optimal_beta_search(K, I, H, tiny.M, solver=solver, bounds=(-14.0, 2.0))
    b1, _ = optimal_beta_search(K, noisy, H, tiny.M, solver=solver, bounds=(-14.0, 2.0))
    assert b1 > b0
