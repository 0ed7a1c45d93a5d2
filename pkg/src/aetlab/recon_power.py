"""Tikhonov reconstruction of power densities from boundary power signals.

Minimises ``1/2 ||K h - I||^2 + beta/2 h^T M h`` where ``M`` is the P1 mass
matrix, i.e. the discrete L2(Omega) penalty.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import splu

from .forward import ForwardMatrix
from .linalg import pcg

log = logging.getLogger(__name__)

LOG_BETA_BOUNDS = (-8.0, 2.0)
GOLDEN = (np.sqrt(5) - 1) / 2


@dataclass
class TikhonovResult:
    h: np.ndarray
    beta: float
    residual: float
    regularizer: float
    optimal: bool = False
    normal_residual: float = np.nan
    error: float = np.nan
    at_lower_bound: bool = False


def _as_array(K):
    return K.matrix if isinstance(K, ForwardMatrix) else np.asarray(K)


def _mass_solver(M):
    if hasattr(M, "solve"):
        return M.solve
    if hasattr(M, "tocsc"):
        return splu(M.tocsc()).solve
    return lambda r: np.linalg.solve(M, r)


def normal_residual(K, I, beta, M, h) -> float:
    """``||(K^T K + beta M) h - K^T I|| / ||K^T I||``."""
    A = _as_array(K)
    KtI = A.T @ I
    r = A.T @ (A @ h) + beta * (M @ h) - KtI
    return float(np.linalg.norm(r) / max(np.linalg.norm(KtI), 1e-300))


def _result(A, I, beta, M, h, **kw):
    return TikhonovResult(
        h=h, beta=beta,
        residual=float(np.linalg.norm(A @ h - I)),
        regularizer=float(np.sqrt(max(h @ (M @ h), 0.0))),
        normal_residual=normal_residual(A, I, beta, M, h), **kw)


def tikhonov_solve(K, I, beta: float, M, *, tol=1e-10, maxiter=None, x0=None,
                   mass_solve=None) -> TikhonovResult:
    """Normal equations ``(K^T K + beta M) h = K^T I`` by CG, preconditioned by ``M``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    A = _as_array(K)
    I = np.asarray(I, dtype=float)
    if A.shape[0] != I.shape[0]:
        raise ValueError("data length does not match the operator")
    Minv = mass_solve or _mass_solver(M)
    h, info = pcg(lambda v: A.T @ (A @ v) + beta * (M @ v), A.T @ I,
                  precond=Minv, x0=x0, tol=tol, maxiter=maxiter)
    log.debug("tikhonov beta=%.3g: %d CG iterations", beta, info.iterations)
    return _result(A, I, beta, M, h)


class SpectralTikhonov:
    """Tikhonov solutions for many ``beta`` from one generalized eigensolve.

    Uses the smaller of the two equivalent problems: the node-space pencil
    ``(K^T K, M)`` or the data-space Gram matrix ``K M^{-1} K^T`` (then
    ``h = M^{-1} K^T (G + beta)^{-1} I``).
    """

    def __init__(self, K, M, mass_solve=None):
        A = _as_array(K)
        self.A = A
        self.M = M
        r, n = A.shape
        Md = M.toarray() if hasattr(M, "toarray") else np.asarray(M)
        if n <= r:
            self.mode = "nodes"
            lam, Z = sla.eigh(A.T @ A, Md)
            self.lam = np.maximum(lam, 0.0)
            self.Z = Z
        else:
            self.mode = "data"
            Minv = mass_solve or _mass_solver(M)
            X = np.column_stack([Minv(row) for row in A])  # M^{-1} K^T
            G = A @ X
            G = 0.5 * (G + G.T)
            lam, V = np.linalg.eigh(G)
            self.lam = np.maximum(lam, 0.0)
            self.V = V
            self.X = X

    def solve(self, I, beta: float) -> TikhonovResult:
        if not beta > 0:
            raise ValueError("beta must be positive")
        I = np.asarray(I, dtype=float)
        if self.mode == "nodes":
            c = self.Z.T @ (self.A.T @ I)
            h = self.Z @ (c / (self.lam + beta))
        else:
            y = self.V @ ((self.V.T @ I) / (self.lam + beta))
            h = self.X @ y
        return _result(self.A, I, beta, self.M, h)


def m_norm(M, v) -> float:
    return float(np.sqrt(max(v @ (M @ v), 0.0)))


def optimal_beta_search(K, I, h_true, M, *, bounds=LOG_BETA_BOUNDS, factor=1.1,
                        solver=None, maxiter=200):
    """Oracle choice of ``beta`` minimising ``||h_beta - h_true||_M``.

    Golden-section search over ``log10(beta)`` in ``bounds``; stops when the
    bracket spans less than ``factor`` in ``beta``. If the lower end of the
    bracket is at least as good as the interior optimum the search reports
    the lower bound. Returns ``(beta_star, TikhonovResult)``.
    """
    h_true = np.asarray(h_true, dtype=float)
    I = np.asarray(I, dtype=float)
    if solver is None:
        solver = SpectralTikhonov(K, M)
    cache = {}

    def evaluate(lb):
        if lb not in cache:
            res = solver.solve(I, 10.0 ** lb)
            res.error = m_norm(M, res.h - h_true)
            cache[lb] = res
        return cache[lb].error

    a, b = bounds
    tol = np.log10(factor)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = evaluate(c), evaluate(d)
    it = 0
    while b - a > tol and it < maxiter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = evaluate(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = evaluate(d)
        it += 1
    best = min(cache, key=lambda k: cache[k].error)
    lower = bounds[0]
    at_floor = False
    if best - lower <= tol:
        at_floor = evaluate(lower) <= cache[best].error
        if at_floor:
            best = lower
    res = cache[best]
    res.optimal = True
    res.at_lower_bound = at_floor
    return 10.0 ** best, res


def error_curve(K, I, h_true, M, log_betas, solver=None):
    """Relative M-norm error of the Tikhonov solution on a grid of ``log10(beta)``."""
    solver = solver or SpectralTikhonov(K, M)
    nrm = m_norm(M, np.asarray(h_true))
    return np.array([m_norm(M, solver.solve(I, 10.0 ** lb).h - h_true) / nrm
                     for lb in log_betas])
