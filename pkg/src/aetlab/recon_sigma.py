"""Conductivity from power densities by iteratively reweighted L1-TV.

Each outer iteration linearizes ``H[sigma + kappa] ~ H[sigma] + W kappa``,
replaces the L1 fidelity and TV terms by weighted quadratics and solves the
TV-preconditioned normal equations

    L0^{-1} W^T M_w W L0^{-T} kt = L0^{-1} W^T M_w (z - H[sigma]),
    kappa = L0^{-T} kt,    L0 L0^T = K_{w0} + eps I,

by conjugate gradients, stopped early. ``sigma`` is then updated by a
backtracking line search on the smoothed objective.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .electrostatics import BoundaryCurrent, NeumannSolver
from .linalg import ConvergenceError, cholesky_factor, pcg
from .mesh import TriangleMesh

log = logging.getLogger(__name__)


class ReconstructionError(RuntimeError):
    def __init__(self, msg, sigma=None, history=None):
        super().__init__(msg)
        self.sigma = sigma
        self.history = history or []


@dataclass
class SigmaReconParams:
    gamma_tv: float = 1e-3
    tau: float = 1e-4
    eps_shift: float = 1e-8
    outer_iters: int = 20
    cg_tol: float = 1e-8
    cg_max_iters: int = 30
    sigma_min: float = 0.1
    sigma_max: float = 10.0
    sigma_init: float = 1.0
    armijo: float = 1e-4
    max_halvings: int = 20
    update_tol: float = 1e-4

    def __post_init__(self):
        vals = [self.gamma_tv, self.tau, self.eps_shift, self.outer_iters,
                self.cg_tol, self.cg_max_iters, self.sigma_min, self.sigma_max,
                self.sigma_init]
        if any(v <= 0 for v in vals):
            raise ValueError("reconstruction parameters must be positive")
        if self.sigma_min >= self.sigma_max:
            raise ValueError("need sigma_min < sigma_max")


class LinearizedOperator:
    """Matrix-free ``W = M^{-1}(M_u - 2 W_su K_s^{-1} L_u)`` at one conductivity.

    ``W kappa`` is the discrete directional derivative of ``H`` at ``sigma``.
    """

    def __init__(self, mesh: TriangleMesh, sigma, u, *, neumann: NeumannSolver,
                 mass_solve):
        self.mesh = mesh
        self.sigma = np.asarray(sigma, dtype=float)
        self.u = np.asarray(u, dtype=float)
        self.neumann = neumann
        self.mass_solve = mass_solve
        t = mesh.triangles
        area = mesh.areas
        gu = fem.element_gradient(mesh, self.u)
        self.M = fem.assemble_mass(mesh)
        self.M_u = fem.mass_piecewise_constant(mesh, np.sum(gu ** 2, axis=1))
        # grad(u) . grad(phi_j) on each triangle
        du_dphi = np.einsum("td,tjd->tj", gu, mesh.grads)
        sl = self.sigma[t]
        int_sig_phi = area[:, None] * (sl.sum(axis=1)[:, None] + sl) / 12.0
        self.W_su = fem._scatter(mesh, int_sig_phi[:, :, None] * du_dphi[:, None, :])
        # (L_u)_ij = int phi_j grad u . grad phi_i
        self.L_u = fem._scatter(mesh, du_dphi[:, :, None] * (area / 3.0)[:, None, None]
                                * np.ones((1, 1, 3)))
        self.L_uT = self.L_u.T.tocsr()
        self.W_suT = self.W_su.T.tocsr()

    def H(self) -> np.ndarray:
        return self.mass_solve(self.M_u @ self.sigma)

    def apply(self, kappa) -> np.ndarray:
        kappa = np.asarray(kappa, dtype=float)
        du = self.neumann.solve_rhs(-(self.L_u @ kappa))
        return self.mass_solve(self.M_u @ kappa + 2 * (self.W_su @ du))

    def adjoint(self, y) -> np.ndarray:
        z = self.mass_solve(np.asarray(y, dtype=float))
        v = self.neumann.solve_rhs(self.W_suT @ z)
        return self.M_u @ z - 2 * (self.L_uT @ v)

    def u_derivative(self, kappa) -> np.ndarray:
        """Directional derivative of the potential, ``u'[sigma, kappa]``."""
        return self.neumann.solve_rhs(-(self.L_u @ np.asarray(kappa, dtype=float)))


def apply_frechet(linop: LinearizedOperator, kappa) -> np.ndarray:
    return linop.apply(kappa)


@dataclass
class FidelityTerm:
    """Forward state for one power density ``z`` at the current conductivity."""

    z: np.ndarray
    current: BoundaryCurrent
    linop: LinearizedOperator
    H: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.z - self.H


class _State:
    """Forward solves and linearizations at a given conductivity."""

    def __init__(self, mesh, sigma, z_list, mass_solve):
        self.sigma = sigma
        self.neumann = NeumannSolver(mesh, sigma)
        self.terms = []
        for z, f in z_list:
            u = self.neumann.solve(f)
            op = LinearizedOperator(mesh, sigma, u, neumann=self.neumann,
                                    mass_solve=mass_solve)
            self.terms.append(FidelityTerm(np.asarray(z, float), f, op, op.H()))


def smoothed_abs(x, tau):
    return np.sqrt(np.asarray(x) ** 2 + tau ** 2)


def objective(mesh: TriangleMesh, sigma, H_list, z_list, gamma, tau, lumped=None) -> float:
    """Smoothed ``sum_l ||H_l - z_l||_L1 + gamma TV(sigma)``."""
    lumped = fem.lumped_mass(mesh) if lumped is None else lumped
    fid = sum(lumped @ smoothed_abs(H - z, tau) for H, z in zip(H_list, z_list))
    g = fem.element_gradient(mesh, sigma)
    tv = mesh.areas @ smoothed_abs(np.linalg.norm(g, axis=1), tau)
    return float(fid + gamma * tv)


def tv_weights(mesh, sigma, tau) -> np.ndarray:
    """Elementwise ``w0 = (|grad sigma|^2 + tau^2)^{-1/2}``."""
    g = fem.element_gradient(mesh, sigma)
    return 1.0 / smoothed_abs(np.linalg.norm(g, axis=1), tau)


def tv_factor(mesh, w0, eps_shift):
    """Cholesky factor of ``K_{w0} + eps I`` with ``eps`` relative to the diagonal."""
    K = fem.assemble_stiffness(mesh, w0)
    shift = eps_shift * float(np.mean(K.diagonal()))
    return cholesky_factor(K, shift), K


def linearized_step(linops, z_sigmas, weights, w0, params: SigmaReconParams, *,
                    factor=None, mesh=None, history=None):
    """Update direction ``kappa`` from the TV-preconditioned normal equations.

    ``linops``, ``z_sigmas`` and ``weights`` are parallel lists, one entry per
    power density; ``weights`` are nodal fidelity weights ``w``.
    """
    if not isinstance(linops, (list, tuple)):
        linops, z_sigmas, weights = [linops], [z_sigmas], [weights]
    mesh = mesh or linops[0].mesh
    if factor is None:
        factor, _ = tv_factor(mesh, w0, params.eps_shift)
    Mw = [fem.assemble_mass(mesh, w) for w in weights]

    def normal(x):
        return sum(op.adjoint(M @ op.apply(x)) for op, M in zip(linops, Mw))

    rhs = sum(op.adjoint(M @ z) for op, M, z in zip(linops, Mw, z_sigmas))
    if not np.any(rhs):
        return np.zeros(mesh.n_nodes)
    b = factor.solve_L(rhs)
    try:
        kt, info = pcg(lambda x: factor.solve_L(normal(factor.solve_Lt(x))), b,
                       tol=params.cg_tol, maxiter=params.cg_max_iters,
                       raise_on_fail=False)
    except ConvergenceError as exc:  # pragma: no cover - pcg only raises when asked
        raise ReconstructionError(f"CG breakdown: {exc}", history=exc.residuals) from exc
    if history is not None:
        history.append(info)
    if info.iterations == 0 and not info.converged:
        raise ReconstructionError("CG broke down in the first iteration",
                                  history=info.residuals)
    return factor.solve_Lt(kt)


@dataclass
class SigmaReconResult:
    sigma: np.ndarray
    history: list = field(default_factory=list)

    def log_csv(self) -> str:
        lines = ["iteration,J,step,cg_iterations,rel_update"]
        for h in self.history:
            lines.append(f"{h['iteration']},{h['J']:.10e},{h['step']:.6g},"
                         f"{h['cg_iterations']},{h['rel_update']:.6e}")
        return "\n".join(lines) + "\n"


def reconstruct_conductivity(mesh: TriangleMesh, z_list, params: SigmaReconParams | None = None,
                             *, mass_solve=None) -> SigmaReconResult:
    """Reconstruct ``sigma`` from pairs ``(z, f)`` of power density and current."""
    params = params or SigmaReconParams()
    if not z_list:
        raise ValueError("need at least one power density")
    for z, _ in z_list:
        if not np.all(np.isfinite(z)):
            raise ValueError("power density must be finite")
    if mass_solve is None:
        mass_solve = cholesky_factor(fem.assemble_mass(mesh)).solve
    lumped = fem.lumped_mass(mesh)
    zs = [np.asarray(z, float) for z, _ in z_list]
    sigma = np.full(mesh.n_nodes, float(params.sigma_init))
    gamma, tau = params.gamma_tv, params.tau
    history = []

    def state_at(s):
        try:
            return _State(mesh, s, z_list, mass_solve)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise ReconstructionError(f"forward solve failed: {exc}", s, history) from exc

    st = state_at(sigma)
    J = objective(mesh, sigma, [t.H for t in st.terms], zs, gamma, tau, lumped)
    for it in range(1, params.outer_iters + 1):
        res = [t.residual for t in st.terms]
        if max(np.abs(r).max() for r in res) == 0.0:
            break
        weights = [1.0 / smoothed_abs(r, tau) for r in res]
        w0 = tv_weights(mesh, sigma, tau)
        factor, _ = tv_factor(mesh, w0, params.eps_shift)
        cg_log = []
        kappa = linearized_step([t.linop for t in st.terms], res, weights, w0, params,
                                factor=factor, mesh=mesh, history=cg_log)
        if not np.any(kappa):
            break
        # directional derivative of the smoothed objective along kappa
        g = sum(lumped @ ((t.H - t.z) / smoothed_abs(t.H - t.z, tau) * t.linop.apply(kappa))
                for t in st.terms)
        gs = fem.element_gradient(mesh, sigma)
        gk = fem.element_gradient(mesh, kappa)
        g += gamma * (mesh.areas * w0) @ np.einsum("td,td->t", gs, gk)

        step, accepted = 1.0, False
        for _ in range(params.max_halvings + 1):
            trial = np.clip(sigma + step * kappa, params.sigma_min, params.sigma_max)
            st_trial = state_at(trial)
            J_trial = objective(mesh, trial, [t.H for t in st_trial.terms], zs,
                                gamma, tau, lumped)
            bound = J + params.armijo * step * g if g < 0 else J
            if J_trial <= bound and J_trial < J:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            log.info("line search failed at outer iteration %d", it)
            break
        rel = np.linalg.norm(trial - sigma) / np.linalg.norm(sigma)
        sigma, st, J = trial, st_trial, J_trial
        history.append(dict(iteration=it, J=J, step=step,
                            cg_iterations=cg_log[0].iterations if cg_log else 0,
                            rel_update=rel))
        log.debug("outer %d: J=%.6e step=%.3g rel=%.2e", it, J, step, rel)
        if rel < params.update_tol:
            break
    return SigmaReconResult(sigma, history)
