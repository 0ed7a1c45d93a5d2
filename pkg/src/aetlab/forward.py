"""Discrete forward operator mapping nodal power densities to time signals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .linalg import CholeskyFactor, cholesky_factor
from .mesh import TriangleMesh
from .wave import WaveRecord


@dataclass
class ForwardMatrix:
    """Dense ``K`` with rows stacked source-major, then time.

    Row ``s * n_times + i`` is ``-eta * M p_s(t_i)``.
    """

    matrix: np.ndarray
    eta: float
    n_sources: int
    n_times: int
    dt: float
    provenance: str = ""

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, h):
        return self.matrix @ h

    def rmatvec(self, y):
        return self.matrix.T @ y

    def block(self, source: int) -> np.ndarray:
        return self.matrix[source * self.n_times:(source + 1) * self.n_times]

    def numerical_rank(self, factor: CholeskyFactor, rtol=1e-8) -> int:
        """Rank of ``K L^{-T}`` (diagnostic for how well the waves span L2)."""
        B = np.column_stack([factor.solve_L(row) for row in self.matrix]).T
        s = np.linalg.svd(B, compute_uv=False)
        return int(np.sum(s > rtol * s[0])) if s.size else 0


def assemble_forward_matrix(mesh: TriangleMesh, waves: list[WaveRecord], eta: float,
                            mass=None, provenance: str = "") -> ForwardMatrix:
    if not waves:
        raise ValueError("need at least one wave record")
    n_t = waves[0].n_times
    dt = waves[0].dt
    for w in waves:
        if w.n_times != n_t or not np.isclose(w.dt, dt, rtol=1e-12):
            raise ValueError("wave records use inconsistent time grids")
        if w.values.shape[1] != mesh.n_nodes:
            raise ValueError("wave record does not live on this mesh")
    M = fem.assemble_mass(mesh) if mass is None else mass
    rows = np.empty((len(waves) * n_t, mesh.n_nodes))
    for s, w in enumerate(waves):
        # M symmetric: (M p_i)^T stacked is P M
        rows[s * n_t:(s + 1) * n_t] = -eta * (M @ w.values.T).T
    return ForwardMatrix(rows, eta, len(waves), n_t, dt, provenance)


def linearized_signal(K: ForwardMatrix, H) -> np.ndarray:
    """Synthetic data ``I = K H``."""
    return K.matrix @ np.asarray(H, dtype=float)


def operator_norm_diff(K1, K2, metric_mass=None, *, factor: CholeskyFactor = None,
                       rtol=1e-6, maxiter=5000, seed=0) -> float:
    """Largest singular value of ``(K1 - K2) L^{-T}`` with ``M = L L^T``.

    Estimated by power iteration on the normal operator; stops when the
    Rayleigh quotient changes by less than ``rtol`` relative.
    """
    A1 = K1.matrix if isinstance(K1, ForwardMatrix) else np.asarray(K1)
    A2 = K2.matrix if isinstance(K2, ForwardMatrix) else np.asarray(K2)
    if A1.shape != A2.shape:
        raise ValueError(f"shape mismatch {A1.shape} vs {A2.shape}")
    D = A1 - A2
    if factor is None:
        if metric_mass is None:
            factor = None
        else:
            factor = cholesky_factor(metric_mass)
    if not np.any(D):
        return 0.0
    if factor is None:
        fwd = lambda x: D @ x  # noqa: E731
        adj = lambda y: D.T @ y  # noqa: E731
    else:
        fwd = lambda x: D @ factor.solve_Lt(x)  # noqa: E731
        adj = lambda y: factor.solve_L(D.T @ y)  # noqa: E731
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(D.shape[1])
    x /= np.linalg.norm(x)
    lam_old = 0.0
    for _ in range(maxiter):
        y = adj(fwd(x))
        lam = float(x @ y)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        x = y / nrm
        if abs(lam - lam_old) <= rtol * abs(lam) * 1e-2:
            break
        lam_old = lam
    else:
        raise RuntimeError("power iteration did not converge")
    return float(np.sqrt(lam))
