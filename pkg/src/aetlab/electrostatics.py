"""Neumann conductivity problem, power densities and boundary power signals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import fem
from .mesh import TriangleMesh
from .wave import WaveRecord

SIGMA_FLOOR = 1e-6


@dataclass
class BoundaryCurrent:
    """Current flux density ``f`` as nodal values (zero at interior nodes)."""

    values: np.ndarray
    name: str = "f"

    @classmethod
    def from_function(cls, mesh: TriangleMesh, fn, name="f"):
        """Sample ``fn(x1, x2)`` on the boundary and remove its mean."""
        v = np.zeros(mesh.n_nodes)
        b = mesh.boundary_nodes
        v[b] = fn(mesh.nodes[b, 0], mesh.nodes[b, 1])
        bm = fem.boundary_mass_vector(mesh)
        v[b] -= (bm @ v) / bm.sum()
        return cls(v, name)

    def load(self, mesh: TriangleMesh) -> np.ndarray:
        """``F_i = int_dOmega f phi_i ds``."""
        return fem.boundary_mass(mesh) @ self.values


def standard_currents(mesh: TriangleMesh) -> list[BoundaryCurrent]:
    """The three currents ``x1``, ``x2`` and ``(x1 + x2)/sqrt(2)``."""
    return [
        BoundaryCurrent.from_function(mesh, lambda x, y: x, "x1"),
        BoundaryCurrent.from_function(mesh, lambda x, y: y, "x2"),
        BoundaryCurrent.from_function(mesh, lambda x, y: (x + y) / np.sqrt(2), "x1px2"),
    ]


@dataclass
class PotentialSolution:
    u: np.ndarray
    sigma: np.ndarray
    boundary_nodes: np.ndarray

    @property
    def g(self) -> np.ndarray:
        return self.u[self.boundary_nodes]


@dataclass
class PowerSignal:
    values: np.ndarray
    dt: float
    current_id: str = "f"
    source_id: int = 0

    @property
    def times(self):
        return self.dt * np.arange(len(self.values))


class NeumannSolver:
    """Factorised Neumann system for one conductivity.

    The constant is fixed by ``int_dOmega u ds = 0`` through a single
    Lagrange multiplier row, so the bordered matrix is nonsingular.
    """

    def __init__(self, mesh: TriangleMesh, sigma=None, *, element_means=None,
                 stiffness=None, rtol=1e-10):
        self.mesh = mesh
        self.rtol = rtol
        if stiffness is not None:
            K = sp.csr_matrix(stiffness)
        elif element_means is not None:
            if np.any(np.asarray(element_means) <= 0):
                raise ValueError("conductivity must be positive")
            K = fem.stiffness_from_element_means(mesh, element_means)
        else:
            sigma = np.asarray(sigma, dtype=float)
            if np.any(sigma < SIGMA_FLOOR) or not np.all(np.isfinite(sigma)):
                raise ValueError(f"conductivity below the floor {SIGMA_FLOOR:g}")
            K = fem.assemble_stiffness(mesh, sigma)
        self.K = K
        self.b = fem.boundary_mass_vector(mesh)
        n = mesh.n_nodes
        bcol = sp.csr_matrix(self.b[:, None])
        A = sp.bmat([[K, bcol], [bcol.T, None]], format="csc")
        self.A = A
        self.lu = splu(A)
        self.n = n

    def solve_rhs(self, rhs, check=True):
        """Solve ``K u = rhs`` in the zero-mean boundary gauge."""
        rhs = np.asarray(rhs, dtype=float)
        ext = np.append(rhs, 0.0)
        x = self.lu.solve(ext)
        if check:
            r = np.linalg.norm(self.A @ x - ext)
            nr = np.linalg.norm(ext)
            if nr > 0 and r > self.rtol * nr:
                # one step of iterative refinement before giving up
                x += self.lu.solve(ext - self.A @ x)
                r = np.linalg.norm(self.A @ x - ext)
                if r > self.rtol * nr:
                    raise np.linalg.LinAlgError(
                        f"Neumann solve residual {r / nr:.2e} above {self.rtol:g}")
        return x[: self.n]

    def solve(self, f: BoundaryCurrent) -> np.ndarray:
        bm = self.b
        mean = bm @ f.values
        scale = max(np.abs(f.values).max(), 1e-300) * bm.sum()
        if abs(mean) > 1e-10 * scale:
            raise ValueError(f"boundary current is not zero-mean (integral {mean:.3e})")
        return self.solve_rhs(f.load(self.mesh))


def solve_neumann(mesh: TriangleMesh, sigma, f: BoundaryCurrent) -> PotentialSolution:
    """P1 solution of ``-div(sigma grad u) = 0``, ``sigma du/dn = f``."""
    sigma = np.asarray(sigma, dtype=float)
    u = NeumannSolver(mesh, sigma).solve(f)
    return PotentialSolution(u, sigma, mesh.boundary_nodes)


def power_density(mesh: TriangleMesh, sigma, u, mass_factor=None) -> np.ndarray:
    """Nodal ``H = sigma |grad u|^2``, L2-projected onto P1.

    ``u`` may be a :class:`PotentialSolution` or a nodal array. Pass
    ``mass_factor`` (an object with ``solve``) to reuse a mass factorization.
    """
    uu = u.u if isinstance(u, PotentialSolution) else np.asarray(u)
    g2 = np.sum(fem.element_gradient(mesh, uu) ** 2, axis=1)
    rhs = fem.mass_piecewise_constant(mesh, g2) @ np.asarray(sigma, dtype=float)
    if mass_factor is None:
        return splu(fem.assemble_mass(mesh).tocsc()).solve(rhs)
    return mass_factor.solve(rhs)


def boundary_power_signal(mesh: TriangleMesh, sigma, eta: float, wave: WaveRecord,
                          f: BoundaryCurrent, *, check_rtol=1e-6,
                          return_both=False):
    """Exact signal ``I(t_i)`` from the perturbed conductivity ``sigma (1 + eta p)``.

    Each time step solves the perturbed Neumann problem. ``I`` is evaluated
    as ``int_dOmega f (g_* - g) ds`` and cross-checked against
    ``-eta int p sigma grad u . grad u_* dx``.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    sigma = np.asarray(sigma, dtype=float)
    P = wave.values
    if P.shape[1] != mesh.n_nodes:
        raise ValueError("wave record does not live on this mesh")
    if np.any(1 + eta * P <= 0):
        raise ValueError("perturbed conductivity is not positive; eta too large")
    base = NeumannSolver(mesh, sigma)
    F = f.load(mesh)
    u = base.solve(f)
    gu = fem.element_gradient(mesh, u)
    sig_mean = sigma[mesh.triangles].mean(axis=1)
    I_bdry = np.zeros(P.shape[0])
    I_vol = np.zeros(P.shape[0])
    for i, p in enumerate(P):
        if not np.any(p):
            continue
        # element averages of sigma*(1 + eta p), integrated exactly
        means = sig_mean + eta * fem.element_integral_product(mesh, sigma, p) / mesh.areas
        us = NeumannSolver(mesh, element_means=means).solve_rhs(F)
        I_bdry[i] = F @ (us - u)
        gs = fem.element_gradient(mesh, us)
        I_vol[i] = -eta * np.sum(fem.element_integral_product(mesh, sigma, p)
                                 * np.einsum("td,td->t", gu, gs))
    scale = np.abs(I_bdry).max()
    if scale > 0:
        gap = np.abs(I_bdry - I_vol).max() / scale
        if gap > check_rtol:
            raise RuntimeError(f"boundary and volume forms of I disagree ({gap:.2e})")
    sig = PowerSignal(I_bdry, wave.dt, f.name, wave.source_id)
    if return_both:
        return sig, I_vol
    return sig
