"""Acceptance checks shared by ``aetlab verify`` and the test suite.

Each ``criterion_N`` returns a :class:`CriterionResult`. Expensive
intermediate products (operators, the ensemble) live on an
:class:`AcceptanceContext` so related checks reuse them.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import fem
from .electrostatics import (BoundaryCurrent, NeumannSolver, boundary_power_signal,
                             power_density)
from .forward import linearized_signal, operator_norm_diff
from .linalg import cholesky_factor
from .metrics import (annulus_mask, centroid, jaccard, largest_superlevel_component,
                      region_mean, relative_error)
from .pipeline import Setup
from .recon_power import SpectralTikhonov
from .recon_sigma import LinearizedOperator, SigmaReconParams, reconstruct_conductivity
from .sampler import INCLUSION_CENTER, SamplerParams, control_mask, sample_structure
from .uq import Reconstructor, mu_sweep, run_ensemble

log = logging.getLogger(__name__)

MU_LADDER = (0.01, 0.02, 0.04, 0.08)
SWEEP_MU = (0.0, 0.01, 0.05, 0.10)
RATE_KAPPA = 1e-2  # beta = kappa * mu * ||K||^2 for the regularization-rate fit


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number}: {self.title} -- {self.detail} ({self.seconds:.0f} s)"


def loglog_fit(x, y) -> tuple[float, float]:
    """Slope and R^2 of a least-squares line through ``(log x, log y)``."""
    lx, ly = np.log(x), np.log(y)
    slope, icpt = np.polyfit(lx, ly, 1)
    res = ly - (slope * lx + icpt)
    ss = np.sum((ly - ly.mean()) ** 2)
    return float(slope), float(1 - np.sum(res ** 2) / ss) if ss > 0 else 1.0


class AcceptanceContext:
    """Scales and cached products used by the acceptance checks."""

    def __init__(self, desk: Setup | None = None, n_ensemble: int = 30, ensemble_mu: float = 0.05,
                 sigma_params: SigmaReconParams | None = None, workers: int = 1):
        self.desk = desk or Setup.desk()
        self.n_ensemble = n_ensemble
        self.ensemble_mu = ensemble_mu
        self.sigma_params = sigma_params or SigmaReconParams()
        self.workers = workers

    @cached_property
    def rate_setup(self) -> Setup:
        return Setup.desk(grid_n=256, n_sources=8)

    @cached_property
    def rate_operators(self):
        """Exact-speed ``K`` and the scaled-speed operators for the mu ladder."""
        S = self.rate_setup
        c = S.sound_speed(mu=0.0)
        K = S.forward(c)
        pairs = []
        for mu in MU_LADDER:
            ct = c.scaled(1 + mu, "scaled")
            pairs.append((mu, ct, S.forward(ct)))
        return c, K, pairs

    @cached_property
    def reconstructor(self) -> Reconstructor:
        return Reconstructor(self.desk, params=self.sigma_params)

    @cached_property
    def exact_reconstructor(self) -> Reconstructor:
        S = self.desk
        return Reconstructor(S, assumed=S.sound_speed(mu=0.0), params=self.sigma_params)

    @cached_property
    def ensemble(self):
        return run_ensemble(self.desk, self.n_ensemble, mu=self.ensemble_mu,
                            reconstructor=self.reconstructor, workers=self.workers)


def _timed(fn):
    def wrapper(ctx, *a, **kw):
        t0 = time.perf_counter()
        res = fn(ctx, *a, **kw)
        res.seconds = time.perf_counter() - t0
        log.info(res.line())
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def criterion_1(ctx: AcceptanceContext) -> CriterionResult:
    """Analytic oracle: sigma = 1 and f = x1 give u = x1 and H = 1."""
    mesh = Setup().mesh
    M = fem.assemble_mass(mesh)
    f = BoundaryCurrent.from_function(mesh, lambda x, y: x, "x1")
    sigma = np.ones(mesh.n_nodes)
    u = NeumannSolver(mesh, sigma).solve(f)
    x1 = mesh.nodes[:, 0]
    H = power_density(mesh, sigma, u, cholesky_factor(M))
    eu = relative_error(M, u, x1)
    eH = relative_error(M, H, np.ones(mesh.n_nodes))
    ok = eu <= 0.01 and eH <= 0.02
    return CriterionResult(1, "electrostatics oracle", ok,
                           f"nodes={mesh.n_nodes} err(u)={eu:.2e} err(H)={eH:.2e}",
                           dict(nodes=mesh.n_nodes, err_u=eu, err_H=eH))


@_timed
def criterion_2(ctx: AcceptanceContext, etas=(4e-3, 2e-3, 1e-3), stride: int = 3) -> CriterionResult:
    """Exact vs linearized signal gap is first order in eta."""
    S = ctx.desk
    wave = S.simulate(S.sound_speed(mu=0.0), sources=[0])[0]
    wave.values = wave.values[::stride]
    f = S.currents[0]
    H = S.H_true[0]
    gaps = []
    for eta in etas:
        exact = boundary_power_signal(S.mesh, S.sigma_true, eta, wave, f).values
        K = -eta * (S.M @ wave.values.T).T
        lin = K @ H
        gaps.append(np.linalg.norm(exact - lin) / np.linalg.norm(lin))
    ratios = [gaps[k + 1] / gaps[k] for k in range(len(gaps) - 1)]
    ok = all(0.4 <= r <= 0.6 for r in ratios)
    return CriterionResult(2, "linearization order", ok,
                           "gaps=" + ", ".join(f"{g:.3e}" for g in gaps)
                           + " ratios=" + ", ".join(f"{r:.3f}" for r in ratios),
                           dict(gaps=gaps, ratios=ratios))


@_timed
def criterion_3(ctx: AcceptanceContext) -> CriterionResult:
    """Operator difference is Lipschitz in the sound speed."""
    S = ctx.rate_setup
    c, K, pairs = ctx.rate_operators
    dK, dc = [], []
    for mu, ct, Kt in pairs:
        dK.append(operator_norm_diff(Kt, K, factor=S.mass_factor))
        dc.append(np.linalg.norm(ct.values - c.values) * S.grid.h)
    slope, r2 = loglog_fit(dc, dK)
    ok = slope >= 0.9 and r2 >= 0.98
    return CriterionResult(3, "operator continuity", ok,
                           f"slope={slope:.3f} R2={r2:.4f} |dK|="
                           + ", ".join(f"{v:.3e}" for v in dK),
                           dict(slope=slope, r2=r2, dK=dK, dc=dc))


@_timed
def criterion_4(ctx: AcceptanceContext) -> CriterionResult:
    """Error of the beta ~ delta strategy decays at least like delta^0.4."""
    S = ctx.rate_setup
    c, K, pairs = ctx.rate_operators
    H = S.H_true[0]
    I = linearized_signal(K, H)
    lam_max = SpectralTikhonov(K, S.M).lam.max()
    errs = []
    for mu, _, Kt in pairs:
        sol = SpectralTikhonov(Kt, S.M)
        h = sol.solve(I, RATE_KAPPA * mu * lam_max).h
        errs.append(relative_error(S.M, h, H))
    slope, r2 = loglog_fit(MU_LADDER, errs)
    ok = slope >= 0.4
    return CriterionResult(4, "regularization rate", ok,
                           f"slope={slope:.3f} errors=" + ", ".join(f"{e:.4f}" for e in errs),
                           dict(slope=slope, r2=r2, errors=errs))


@_timed
def criterion_5(ctx: AcceptanceContext) -> CriterionResult:
    """mu sweep: increasing error, floor beta at mu = 0, beta* ~ 1e-5 at mu = 0.1."""
    rows = mu_sweep(ctx.desk, SWEEP_MU, reconstructor=ctx.reconstructor)
    errs = [r.error for r in rows]
    betas = [r.beta for r in rows]
    mono = all(b > a for a, b in zip(errs, errs[1:]))
    floor = rows[0].at_lower_bound
    top = 1e-6 <= betas[-1] <= 1e-4
    ok = mono and floor and top
    return CriterionResult(5, "mu-sweep monotonicity", ok,
                           "errors=" + ", ".join(f"{e:.4f}" for e in errs)
                           + " beta*=" + ", ".join(f"{b:.2e}" for b in betas)
                           + f" [increasing={mono} floor={floor} range={top}]",
                           dict(errors=errs, betas=betas, increasing=mono,
                                floor=floor, top_in_range=top))


def _sigma_summary(S: Setup, sigma) -> dict:
    mesh, D = S.mesh, S.inclusion_mask
    comp = largest_superlevel_component(mesh, sigma, 1.2)
    return dict(inclusion_mean=region_mean(mesh, sigma, D),
                background_mean=region_mean(mesh, sigma, ~D),
                centroid=centroid(mesh, comp) if comp.any() else np.array([np.nan, np.nan]),
                jaccard=jaccard(mesh, comp, D))


@_timed
def criterion_6(ctx: AcceptanceContext) -> CriterionResult:
    """Conductivity recovery with the exact sound speed."""
    S = ctx.desk
    rec = ctx.exact_reconstructor
    hs = rec.power_densities(rec.K_assumed)
    res = reconstruct_conductivity(S.mesh, [(h, f) for (h, *_), f in zip(hs, S.currents)],
                                   ctx.sigma_params, mass_solve=S.mass_factor.solve)
    v = _sigma_summary(S, res.sigma)
    dist = float(np.hypot(*(v["centroid"] - np.asarray(INCLUSION_CENTER))))
    ok = (1.35 <= v["inclusion_mean"] <= 1.65 and dist <= 0.1
          and 0.95 <= v["background_mean"] <= 1.05)
    return CriterionResult(6, "conductivity, exact c", ok,
                           f"inclusion={v['inclusion_mean']:.3f} background="
                           f"{v['background_mean']:.3f} centroid offset={dist:.3f} "
                           f"H errors=" + ", ".join(f"{e:.1e}" for _, _, e, _ in hs),
                           dict(v, centroid_offset=dist))


@_timed
def criterion_7(ctx: AcceptanceContext) -> CriterionResult:
    """Conductivity under uncertainty: most realizations find the inclusion."""
    S = ctx.desk
    ens = ctx.ensemble
    good = []
    for s in ens.samples:
        v = _sigma_summary(S, s.sigma)
        good.append(v["inclusion_mean"] >= 1.25 and v["jaccard"] >= 0.3)
    n_total = ctx.n_ensemble
    frac = sum(good) / n_total
    ok = frac >= 0.8
    return CriterionResult(7, "conductivity robustness", ok,
                           f"{sum(good)}/{n_total} realizations pass "
                           f"({len(ens.failures)} failed)",
                           dict(fraction=frac, failures=len(ens.failures)))


@_timed
def criterion_8(ctx: AcceptanceContext) -> CriterionResult:
    """Ensemble statistics: correlation structure and boundary-heavy std."""
    S = ctx.desk
    ens = ctx.ensemble
    if ens.sigma is None:
        return CriterionResult(8, "ensemble statistics", False, "too few samples")
    C = ens.signals.corr
    diag = bool(np.allclose(np.diag(C), 1.0))
    within, across = ens.signals.block_contrast()
    std = ens.sigma.std
    outer = region_mean(S.mesh, std, annulus_mask(S.mesh, 0.9))
    inner = region_mean(S.mesh, std, annulus_mask(S.mesh, 0.0, 0.7))
    ok = diag and within > across and outer >= 1.5 * inner
    return CriterionResult(8, "ensemble statistics", ok,
                           f"diag=1:{diag} |rho| within={within:.3f} across={across:.3f} "
                           f"std outer/inner={outer / inner:.2f}",
                           dict(within=within, across=across, std_outer=outer,
                                std_inner=inner, n=ens.n_samples))


@_timed
def criterion_9(ctx: AcceptanceContext) -> CriterionResult:
    """Quick property checks of the building blocks."""
    from .mesh import generate_disk_mesh
    checks = {}
    mesh = generate_disk_mesh(1.0, 400)
    M = fem.assemble_mass(mesh)
    one = np.ones(mesh.n_nodes)
    checks["fem_area"] = abs(one @ M @ one - mesh.areas.sum()) < 1e-12
    x = mesh.nodes[:, 0]
    Kst = fem.assemble_stiffness(mesh, one)
    checks["fem_stiffness"] = abs(x @ Kst @ x - mesh.areas.sum()) < 1e-10 and \
        np.abs(Kst @ one).max() < 1e-12
    rng = np.random.default_rng(0)
    L = cholesky_factor(M)
    v = rng.standard_normal(mesh.n_nodes)
    checks["cholesky_identity"] = abs(np.sum(L.apply_Lt(v) ** 2) / (v @ M @ v) - 1) < 1e-12
    sigma = 1 + 0.3 * rng.random(mesh.n_nodes)
    ns = NeumannSolver(mesh, sigma)
    f = BoundaryCurrent.from_function(mesh, lambda a, b: a, "x1")
    u = ns.solve(f)
    op = LinearizedOperator(mesh, sigma, u, neumann=ns, mass_solve=L.solve)
    a, b = rng.standard_normal((2, mesh.n_nodes))
    Wa = op.apply(a)
    checks["adjoint_W"] = abs(b @ Wa - a @ op.adjoint(b)) <= 1e-8 * abs(b @ Wa)
    kappa = np.sin(3 * mesh.nodes[:, 0]) * np.cos(2 * mesh.nodes[:, 1])
    H0 = op.H()
    Wk = op.apply(kappa)
    nWk = np.sqrt(Wk @ M @ Wk)
    fd = []
    for t in (1e-3, 1e-4):
        s2 = sigma + t * kappa
        H1 = power_density(mesh, s2, NeumannSolver(mesh, s2).solve(f), L)
        d = (H1 - H0) / t - Wk
        fd.append(np.sqrt(d @ M @ d) / nWk)
    kn = np.sqrt(kappa @ M @ kappa)
    checks["frechet_fd"] = fd[0] <= 5e-3 / kn and fd[1] <= 5e-4 / kn and fd[1] < 0.2 * fd[0]
    p = SamplerParams(N=65, seed=3)
    s1, s2_ = sample_structure(p), sample_structure(p)
    checks["seed_determinism"] = np.array_equal(s1.values, s2_.values)
    from .sampler import quantile_cut, spectral_field, draw_phases
    q = spectral_field(p, p.beta0, draw_phases(p.N, np.random.default_rng(1)))
    U = control_mask(p, 1.6)
    r = quantile_cut(q, U, p.gamma_cut)
    checks["cut_ratio"] = abs(np.mean(q[U] < r) - p.gamma_cut) <= 1.0 / U.sum()
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    return CriterionResult(9, "property checks", ok,
                           f"{sum(checks.values())}/{len(checks)} pass"
                           + (f" (failed: {', '.join(failed)})" if failed else ""),
                           checks)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


def run_acceptance(numbers=None, ctx: AcceptanceContext | None = None, echo=print):
    """Run the selected criteria, printing one line each; returns the results."""
    ctx = ctx or AcceptanceContext()
    out = []
    for n in numbers or sorted(CRITERIA):
        try:
            res = CRITERIA[n](ctx)
        except Exception as exc:  # noqa: BLE001 - report and continue with the rest
            res = CriterionResult(n, CRITERIA[n].__name__, False,
                                  f"error: {type(exc).__name__}: {exc}")
        if echo:
            echo(res.line())
        out.append(res)
    return out
