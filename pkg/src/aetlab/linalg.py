"""Sparse Cholesky factorization and preconditioned conjugate gradients."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu, spsolve_triangular

log = logging.getLogger(__name__)


class CholeskyError(np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residuals=None):
        super().__init__(msg)
        self.residuals = residuals or []


class CholeskyFactor:
    """Factor ``F`` with ``F F^T = A + shift I``.

    ``F = P^T C`` where ``C`` is lower triangular in a reverse Cuthill-McKee
    ordering ``P``; all solves go through triangular substitutions with ``C``.
    """

    def __init__(self, C: sp.csr_matrix, perm: np.ndarray):
        self.C = C.tocsr()
        self.Ct = C.T.tocsr()
        self.perm = perm
        self.n = C.shape[0]

    def solve_L(self, b):
        """``F^{-1} b``."""
        b = np.asarray(b, dtype=float)
        return spsolve_triangular(self.C, b[self.perm], lower=True)

    def solve_Lt(self, y):
        """``F^{-T} y``."""
        z = spsolve_triangular(self.Ct, np.asarray(y, dtype=float), lower=False)
        x = np.empty_like(z)
        x[self.perm] = z
        return x

    def solve(self, b):
        return self.solve_Lt(self.solve_L(b))

    def apply_Lt(self, v):
        """``F^T v``."""
        return self.Ct @ np.asarray(v, dtype=float)[self.perm]

    def apply_L(self, y):
        z = self.C @ np.asarray(y, dtype=float)
        x = np.empty_like(z)
        x[self.perm] = z
        return x

    def to_dense(self):
        """Dense ``F`` (testing only)."""
        F = np.zeros((self.n, self.n))
        F[self.perm] = self.C.toarray()
        return F


def _bandwidth(A) -> int:
    C = sp.coo_matrix(A)
    return int(np.abs(C.row - C.col).max()) if C.nnz else 0


def cholesky_factor(A, shift: float = 0.0) -> CholeskyFactor:
    """Cholesky factor of ``A + shift I`` for sparse symmetric ``A``.

    Raises :class:`CholeskyError` when a pivot is not safely positive.
    """
    A = sp.csr_matrix(A, dtype=float)
    n = A.shape[0]
    if shift:
        A = A + shift * sp.identity(n, format="csr")
    asym = abs(A - A.T).max() if A.nnz else 0.0
    if asym > 1e-12 * max(abs(A).max(), 1e-300):
        raise CholeskyError("matrix is not symmetric")
    perm = reverse_cuthill_mckee(A, symmetric_mode=True)
    if _bandwidth(A[perm][:, perm]) >= _bandwidth(A):
        perm = np.arange(n)
    Ap = A[perm][:, perm].tocsc()
    try:
        lu = splu(Ap, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                  options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise CholeskyError(f"factorization failed ({exc}); try a larger shift") from exc
    if np.any(lu.perm_r != np.arange(n)) or np.any(lu.perm_c != np.arange(n)):
        raise CholeskyError("pivoting occurred; matrix is not positive definite")
    d = lu.U.diagonal()
    tol = n * np.finfo(float).eps * np.abs(A.diagonal()).max()
    if np.any(d <= tol):
        k = int(np.argmin(d))
        raise CholeskyError(
            f"nonpositive pivot {d[k]:.3e} at step {k}; try a larger shift")
    C = (lu.L @ sp.diags(np.sqrt(d))).tocsr()
    return CholeskyFactor(C, perm)


@dataclass
class CGInfo:
    iterations: int = 0
    converged: bool = False
    residuals: list = field(default_factory=list)


def pcg(apply_A, b, *, precond=None, x0=None, tol=1e-10, maxiter=None,
        raise_on_fail=True):
    """Preconditioned conjugate gradients for an SPD operator.

    Stops when ``||r|| <= tol ||b||``. Returns ``(x, CGInfo)``. With
    ``raise_on_fail=False`` the last iterate is returned when ``maxiter`` is
    exhausted (early stopping).
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    maxiter = 10 * n if maxiter is None else maxiter
    M = precond if precond is not None else (lambda r: r)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x) if x0 is not None else b.copy()
    nb = np.linalg.norm(b)
    info = CGInfo()
    if nb == 0.0:
        info.converged = True
        return np.zeros(n), info
    z = M(r)
    p = z.copy()
    rz = r @ z
    info.residuals.append(np.linalg.norm(r) / nb)
    if info.residuals[-1] <= tol:
        info.converged = True
        return x, info
    for k in range(1, maxiter + 1):
        Ap = apply_A(p)
        pAp = p @ Ap
        if not pAp > 0:
            msg = f"CG breakdown at iteration {k}: p^T A p = {pAp:.3e}"
            if raise_on_fail:
                raise ConvergenceError(msg, info.residuals)
            log.warning(msg)
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        info.iterations = k
        res = np.linalg.norm(r) / nb
        info.residuals.append(res)
        if res <= tol:
            info.converged = True
            break
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if not info.converged and raise_on_fail:
        raise ConvergenceError(
            f"CG did not reach tol {tol:g} in {maxiter} iterations "
            f"(relative residual {info.residuals[-1]:.3e})", info.residuals)
    return x, info
