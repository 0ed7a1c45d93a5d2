import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from aetlab import fem
from aetlab.linalg import CholeskyError, cholesky_factor
from aetlab.mesh import MeshError, TriangleMesh, generate_disk_mesh


def unit_triangle():
    return TriangleMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                        np.array([[0, 1, 2]]), np.array([0, 1, 2]))


@pytest.mark.parametrize("target", [4, 5, 10, 50, 500, 2000])
def test_mesh_invariants(target):
    mesh = generate_disk_mesh(1.0, target)
    assert abs(mesh.n_nodes - target) <= 0.15 * target
    assert np.all(mesh.signed_areas() > 0)
    assert mesh.min_angle() >= 20.0
    r = np.hypot(*mesh.nodes[mesh.boundary_nodes].T)
    assert np.allclose(r, 1.0, atol=1e-9)
    mesh.check()


def test_mesh_conforming(disk500):
    edges, counts = disk500.edges()
    on_boundary = set(map(tuple, np.sort(disk500.boundary_edges, axis=1)))
    for e, c in zip(map(tuple, edges), counts):
        assert c == (1 if e in on_boundary else 2)


def test_smallest_mesh():
    mesh = generate_disk_mesh(1.0, 4)
    assert mesh.n_nodes == 4 and len(mesh.boundary_nodes) == 3


def test_mesh_area(disk500):
    assert abs(disk500.areas.sum() - np.pi) / np.pi < 0.01


def test_mesh_large_node_count():
    mesh = generate_disk_mesh(1.0, 20100)
    assert abs(mesh.n_nodes - 20100) <= 0.15 * 20100


def test_mesh_bad_input():
    with pytest.raises(ValueError):
        generate_disk_mesh(1.0, 3)
    with pytest.raises(ValueError):
        generate_disk_mesh(-1.0, 100)


def test_mesh_deterministic():
    a, b = generate_disk_mesh(1.0, 300), generate_disk_mesh(1.0, 300)
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.triangles, b.triangles)


def test_element_mass():
    M = fem.assemble_mass(unit_triangle()).toarray()
    ref = 0.5 / 12 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]])
    assert np.allclose(M, ref, atol=1e-15)


def test_mass_partition_of_unity(disk500):
    M = fem.assemble_mass(disk500)
    assert abs(M.sum() - np.pi) / np.pi < 0.01
    assert np.isclose(M.sum(), disk500.areas.sum(), rtol=1e-12)
    assert np.allclose(M.sum(axis=1).A1, fem.load_vector(disk500), rtol=1e-12)


def test_mass_weight_linear(disk500):
    M = fem.assemble_mass(disk500)
    M2 = fem.assemble_mass(disk500, np.full(disk500.n_nodes, 2.0))
    assert abs(M2 - 2 * M).max() < 1e-15


def test_weighted_mass_exact_for_linear_weight(disk500):
    x = disk500.nodes[:, 0]
    w = 2 + x
    Mw = fem.assemble_mass(disk500, w)
    one = np.ones(disk500.n_nodes)
    # int (2 + x) dx over the polygon equals 2|P| + int x = sum of elementwise exact values
    ref = np.sum(disk500.areas * w[disk500.triangles].mean(axis=1))
    assert np.isclose(one @ Mw @ one, ref, rtol=1e-12)


def test_mass_rejects_nonpositive_weight(disk500):
    w = np.ones(disk500.n_nodes)
    w[3] = 0.0
    with pytest.raises(ValueError):
        fem.assemble_mass(disk500, w)


def test_stiffness_constants(disk500):
    one = np.ones(disk500.n_nodes)
    K = fem.assemble_stiffness(disk500, one)
    assert np.abs(K @ one).max() < 1e-10
    x = disk500.nodes[:, 0]
    assert abs(x @ K @ x - np.pi) / np.pi < 0.01
    K3 = fem.assemble_stiffness(disk500, 3 * one)
    assert abs(K3 - 3 * K).max() < 1e-12
    assert abs(K - K.T).max() < 1e-12


def test_stiffness_positive_on_complement(disk500, rng):
    K = fem.assemble_stiffness(disk500, np.ones(disk500.n_nodes))
    v = rng.standard_normal(disk500.n_nodes)
    v -= v.mean()
    assert v @ K @ v > 0


def test_stiffness_rejects_nonpositive(disk500):
    with pytest.raises(ValueError):
        fem.assemble_stiffness(disk500, -np.ones(disk500.n_nodes))


def test_cholesky_identity():
    L = cholesky_factor(sp.identity(5, format="csr"))
    assert np.allclose(L.to_dense(), np.eye(5))


def test_cholesky_mass_identity(rng):
    mesh = generate_disk_mesh(1.0, 20100)
    M = fem.assemble_mass(mesh)
    L = cholesky_factor(M)
    for _ in range(3):
        v = rng.standard_normal(mesh.n_nodes)
        assert abs(np.sum(L.apply_Lt(v) ** 2) / (v @ M @ v) - 1) < 1e-10


def test_cholesky_reconstructs(disk500):
    M = fem.assemble_mass(disk500)
    F = cholesky_factor(M).to_dense()
    A = M.toarray()
    assert np.linalg.norm(F @ F.T - A) / np.linalg.norm(A) < 1e-10


def test_cholesky_singular_stiffness(disk500):
    K = fem.assemble_stiffness(disk500, np.ones(disk500.n_nodes))
    with pytest.raises(CholeskyError):
        cholesky_factor(K)
    L = cholesky_factor(K, shift=1e-8)
    b = np.arange(disk500.n_nodes, dtype=float)
    x = L.solve(b)
    assert np.allclose(K @ x + 1e-8 * x, b, rtol=1e-6, atol=1e-6 * np.abs(b).max())


def test_interpolation_exact_for_linears(disk500):
    xs = np.linspace(-1.2, 1.2, 41)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    v = fem.interpolate_grid_to_mesh(np.full(X.shape, 5.0), disk500, xs)
    assert np.allclose(v, 5.0)
    v = fem.interpolate_grid_to_mesh(X, disk500, xs)
    assert np.allclose(v, disk500.nodes[:, 0], atol=1e-12)


def test_interpolation_second_order(disk500):
    def err(n):
        xs = np.linspace(-1.2, 1.2, n)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        g = lambda x, y: np.exp(-4 * (x ** 2 + (y - 0.2) ** 2))  # noqa: E731
        v = fem.interpolate_grid_to_mesh(g(X, Y), disk500, xs)
        return np.abs(v - g(*disk500.nodes.T)).max()
    ratio = err(41) / err(81)
    assert 3.2 < ratio < 4.8


def test_interpolation_outside_grid(disk500):
    xs = np.linspace(-0.5, 0.5, 11)
    with pytest.raises(ValueError):
        fem.interpolate_grid_to_mesh(np.zeros((11, 11)), disk500, xs)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=4, max_value=300))
def test_mesh_property(target):
    mesh = generate_disk_mesh(1.0, target)
    M = fem.assemble_mass(mesh)
    assert np.isclose(M.sum(), mesh.areas.sum(), rtol=1e-12)
    assert mesh.min_angle() >= 20.0
