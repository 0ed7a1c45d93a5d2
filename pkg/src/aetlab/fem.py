"""P1 finite-element assembly on a :class:`~aetlab.mesh.TriangleMesh`.

All element integrals are exact for piecewise-linear coefficients. The
barycentric moment formula

    int_T l1^a l2^b l3^c dx = 2|T| a! b! c! / (a + b + c + 2)!

gives the local tensors used below.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .mesh import TriangleMesh

# int_T l_i l_j = |T| * _M2[i, j]
_M2 = (np.ones((3, 3)) + np.eye(3)) / 12.0
# int_T l_i l_j l_k = |T| * _M3[i, j, k]
_M3 = np.empty((3, 3, 3))
for _i in range(3):
    for _j in range(3):
        for _k in range(3):
            _n = len({_i, _j, _k})
            _M3[_i, _j, _k] = {1: 1 / 10, 2: 1 / 30, 3: 1 / 60}[_n]


def _scatter(mesh: TriangleMesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def _check_positive(values, what):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ValueError(f"{what} must be strictly positive")
    return values


def assemble_mass(mesh: TriangleMesh, weight=None) -> sp.csr_matrix:
    """Mass matrix ``int w phi_i phi_j``.

    ``weight`` may be nodal (P1, length ``n_nodes``) or elementwise constant
    (length ``n_triangles``); ``None`` means ``w = 1``.
    """
    area = mesh.areas
    if weight is None:
        local = area[:, None, None] * _M2[None]
    else:
        w = _check_positive(weight, "mass weight")
        if w.shape[0] == mesh.n_nodes and w.shape[0] != mesh.n_triangles:
            wl = w[mesh.triangles]
            local = area[:, None, None] * np.einsum("ijk,tk->tij", _M3, wl)
        elif w.shape[0] == mesh.n_triangles:
            local = (area * w)[:, None, None] * _M2[None]
        else:
            raise ValueError("weight length matches neither nodes nor triangles")
    return _scatter(mesh, local)


def mass_piecewise_constant(mesh: TriangleMesh, values) -> sp.csr_matrix:
    """Mass matrix with an elementwise constant weight of any sign."""
    values = np.asarray(values, dtype=float)
    local = (mesh.areas * values)[:, None, None] * _M2[None]
    return _scatter(mesh, local)


def stiffness_from_element_means(mesh: TriangleMesh, means) -> sp.csr_matrix:
    """Stiffness matrix for a coefficient given by its per-triangle average."""
    g = mesh.grads
    local = (mesh.areas * means)[:, None, None] * np.einsum("tid,tjd->tij", g, g)
    return _scatter(mesh, local)


def assemble_stiffness(mesh: TriangleMesh, coeff) -> sp.csr_matrix:
    """Stiffness matrix ``int coeff grad(phi_i) . grad(phi_j)``.

    A nodal (P1) coefficient enters through its exact element average; an
    elementwise coefficient is used as is.
    """
    c = _check_positive(coeff, "stiffness coefficient")
    if c.shape[0] == mesh.n_nodes and c.shape[0] != mesh.n_triangles:
        means = c[mesh.triangles].mean(axis=1)
    elif c.shape[0] == mesh.n_triangles:
        means = c
    else:
        raise ValueError("coefficient length matches neither nodes nor triangles")
    return stiffness_from_element_means(mesh, means)


def element_integral_product(mesh: TriangleMesh, a, b) -> np.ndarray:
    """``int_T a b`` per triangle for nodal P1 fields ``a`` and ``b``."""
    al = np.asarray(a)[mesh.triangles]
    bl = np.asarray(b)[mesh.triangles]
    return mesh.areas * np.einsum("ti,ij,tj->t", al, _M2, bl)


def element_gradient(mesh: TriangleMesh, u) -> np.ndarray:
    """Constant gradient of a P1 field on each triangle, shape (T, 2)."""
    return np.einsum("tid,ti->td", mesh.grads, np.asarray(u)[mesh.triangles])


def load_vector(mesh: TriangleMesh, values=None) -> np.ndarray:
    """``int phi_i v`` for nodal P1 ``v`` (``v = 1`` when omitted)."""
    if values is None:
        values = np.ones(mesh.n_nodes)
    return assemble_mass(mesh) @ np.asarray(values, dtype=float)


def boundary_mass(mesh: TriangleMesh) -> sp.csr_matrix:
    """1D P1 mass matrix on the boundary polygon, ``int_dOmega phi_i phi_j ds``."""
    e = mesh.boundary_edges
    ln = mesh.boundary_lengths()
    local = ln[:, None, None] * (np.ones((2, 2)) + np.eye(2))[None] / 6.0
    rows = np.repeat(e, 2, axis=1).ravel()
    cols = np.tile(e, (1, 2)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def boundary_mass_vector(mesh: TriangleMesh) -> np.ndarray:
    """``b_i = int_dOmega phi_i ds`` (nonzero only on boundary nodes)."""
    return np.asarray(boundary_mass(mesh).sum(axis=1)).ravel()


def lumped_mass(mesh: TriangleMesh) -> np.ndarray:
    """Row sums of the mass matrix, ``int phi_i dx``."""
    w = np.zeros(mesh.n_nodes)
    np.add.at(w, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return w


def interpolation_matrix(xs, ys, points) -> sp.csr_matrix:
    """Sparse bilinear interpolation from a tensor grid to scattered points.

    ``xs`` and ``ys`` are the (uniform, increasing) grid coordinates; the
    grid field is flattened in C order with ``x`` as the first index.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    pts = np.asarray(points, dtype=float)
    hx = xs[1] - xs[0]
    hy = ys[1] - ys[0]
    fx = (pts[:, 0] - xs[0]) / hx
    fy = (pts[:, 1] - ys[0]) / hy
    eps = 1e-9
    if (np.any(fx < -eps) or np.any(fx > len(xs) - 1 + eps)
            or np.any(fy < -eps) or np.any(fy > len(ys) - 1 + eps)):
        raise ValueError("point outside the interpolation grid")
    i = np.clip(np.floor(fx).astype(int), 0, len(xs) - 2)
    j = np.clip(np.floor(fy).astype(int), 0, len(ys) - 2)
    tx = fx - i
    ty = fy - j
    ny = len(ys)
    n = pts.shape[0]
    rows = np.repeat(np.arange(n), 4)
    cols = np.column_stack([i * ny + j, (i + 1) * ny + j,
                            i * ny + j + 1, (i + 1) * ny + j + 1]).ravel()
    vals = np.column_stack([(1 - tx) * (1 - ty), tx * (1 - ty),
                            (1 - tx) * ty, tx * ty]).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, len(xs) * len(ys)))


def interpolate_grid_to_mesh(grid_field, mesh: TriangleMesh, xs, ys=None) -> np.ndarray:
    """Bilinear interpolation of ``grid_field[ix, iy]`` at the mesh nodes."""
    ys = xs if ys is None else ys
    B = interpolation_matrix(xs, ys, mesh.nodes)
    return B @ np.asarray(grid_field, dtype=float).ravel()
