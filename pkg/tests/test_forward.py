import numpy as np
import pytest

from aetlab import fem
from aetlab.forward import ForwardMatrix, assemble_forward_matrix, operator_norm_diff
from aetlab.linalg import cholesky_factor
from aetlab.wave import WaveRecord


def test_constant_kernel(disk500):
    w = WaveRecord(np.ones((4, disk500.n_nodes)), 0.1)
    K = assemble_forward_matrix(disk500, [w, w], 1e-3)
    I = K @ np.ones(disk500.n_nodes)
    assert K.shape == (8, disk500.n_nodes)
    assert np.allclose(I, -1e-3 * disk500.areas.sum(), rtol=1e-12)
    assert np.allclose(I, -1e-3 * np.pi, rtol=0.01)


def test_zero_waves(disk500):
    K = assemble_forward_matrix(disk500, [WaveRecord(np.zeros((3, disk500.n_nodes)), 0.1)], 1e-3)
    assert not np.any(K.matrix)


def test_row_layout_and_eta_linearity(disk500, rng):
    waves = [WaveRecord(rng.standard_normal((3, disk500.n_nodes)), 0.1, s) for s in range(2)]
    K1 = assemble_forward_matrix(disk500, waves, 1.0)
    K2 = assemble_forward_matrix(disk500, waves, 2e-3)
    assert np.allclose(K2.matrix, 2e-3 * K1.matrix, rtol=1e-14, atol=0)
    M = fem.assemble_mass(disk500)
    assert np.allclose(K1.matrix[4], -(M @ waves[1].values[1]))
    assert np.array_equal(K1.block(1), K1.matrix[3:6])


def test_inconsistent_time_grids(disk500):
    a = WaveRecord(np.zeros((3, disk500.n_nodes)), 0.1)
    b = WaveRecord(np.zeros((4, disk500.n_nodes)), 0.1)
    with pytest.raises(ValueError):
        assemble_forward_matrix(disk500, [a, b], 1e-3)


def test_linearized_signal_self_consistent(tiny):
    K = tiny.forward(tiny.sound_speed(mu=0.0))
    H = tiny.H_true[0]
    I = K @ H
    direct = np.concatenate([-tiny.eta * (w.values @ (tiny.M @ H))
                             for w in tiny.simulate(tiny.sound_speed(mu=0.0))])
    assert np.allclose(I, direct, rtol=1e-10, atol=1e-10 * np.abs(I).max())


def test_norm_diff_trivial(disk500, rng):
    A = ForwardMatrix(rng.standard_normal((6, disk500.n_nodes)), 1.0, 1, 6, 0.1)
    M = fem.assemble_mass(disk500)
    assert operator_norm_diff(A, A, M) == 0.0
    B = ForwardMatrix(2 * A.matrix, 1.0, 1, 6, 0.1)
    zero = ForwardMatrix(np.zeros_like(A.matrix), 1.0, 1, 6, 0.1)
    assert operator_norm_diff(B, A, M) == pytest.approx(operator_norm_diff(A, zero, M), rel=1e-6)


def test_norm_diff_dense_reference(rng):
    A = rng.standard_normal((10, 8))
    B = rng.standard_normal((10, 8))
    Q = rng.standard_normal((8, 8))
    M = Q @ Q.T + 8 * np.eye(8)
    L = np.linalg.cholesky(M)
    ref = np.linalg.svd((A - B) @ np.linalg.inv(L).T, compute_uv=False)[0]
    import scipy.sparse as sp
    est = operator_norm_diff(A, B, sp.csr_matrix(M))
    assert est == pytest.approx(ref, rel=1e-6)


def test_norm_diff_shape_mismatch():
    with pytest.raises(ValueError):
        operator_norm_diff(np.zeros((3, 4)), np.zeros((4, 4)))


def test_numerical_rank(disk500):
    waves = [WaveRecord(np.ones((3, disk500.n_nodes)), 0.1)]
    K = assemble_forward_matrix(disk500, waves, 1e-3)
    assert K.numerical_rank(cholesky_factor(fem.assemble_mass(disk500))) == 1
