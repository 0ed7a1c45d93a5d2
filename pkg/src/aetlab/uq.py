"""Monte Carlo studies of reconstructions under sound-speed uncertainty.

Every sample draws a structured sound speed, synthesizes linearized data
with it, and reconstructs with the constant assumed speed. Statistics use
the unbiased ``n - 1`` estimators.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fem, fileio
from .pipeline import Setup
from .recon_power import SpectralTikhonov, m_norm, optimal_beta_search
from .recon_sigma import SigmaReconParams, reconstruct_conductivity

log = logging.getLogger(__name__)


@dataclass
class SampleResult:
    index: int
    seed: int
    sigma: np.ndarray
    H: list
    betas: list
    errors: list
    signals: np.ndarray  # data for the first boundary current, stacked
    seconds: float = 0.0


@dataclass
class FieldStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass
class SignalStatistics:
    """Mean, standard deviation and correlation of stacked signal entries.

    ``index[k] = (source, time index)`` labels entry ``k``. Correlations
    involving an entry with zero variance are undefined and stored as NaN
    (the diagonal stays 1).
    """

    mean: np.ndarray
    std: np.ndarray
    corr: np.ndarray
    index: np.ndarray

    def block_contrast(self) -> tuple[float, float]:
        """Mean ``|rho|`` within source blocks and across them (diagonal excluded)."""
        src = self.index[:, 0]
        same = src[:, None] == src[None, :]
        np.fill_diagonal(same, False)
        other = src[:, None] != src[None, :]
        a = np.abs(self.corr)
        return float(np.nanmean(a[same])), float(np.nanmean(a[other]))


@dataclass
class EnsembleSummary:
    n_samples: int
    sigma: FieldStats | None
    H: list = field(default_factory=list)
    signals: SignalStatistics | None = None
    samples: list = field(default_factory=list)
    failures: list = field(default_factory=list)


def mean_std(stack) -> FieldStats:
    """Columnwise mean and ``n - 1`` standard deviation, two passes."""
    X = np.asarray(stack, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise ValueError("statistics need at least two samples")
    mean = X.sum(axis=0) / n
    var = ((X - mean) ** 2).sum(axis=0) / (n - 1)
    return FieldStats(mean, np.sqrt(var))


def correlation(stack) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample mean, std and correlation matrix of the columns of ``stack``."""
    X = np.asarray(stack, dtype=float)
    st = mean_std(X)
    D = X - st.mean
    cov = D.T @ D / (X.shape[0] - 1)
    s = st.std
    ok = s > 0
    corr = np.full(cov.shape, np.nan)
    sub = np.ix_(ok, ok)
    corr[sub] = cov[sub] / np.outer(s[ok], s[ok])
    np.clip(corr, -1.0, 1.0, out=corr)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return st.mean, s, corr


def signal_statistics(signals, n_times: int, sources=None) -> SignalStatistics:
    """Statistics of stacked signals, restricted to the given source blocks."""
    S = np.asarray(signals, dtype=float)
    n_src = S.shape[1] // n_times
    sources = range(n_src) if sources is None else [s for s in sources if s < n_src]
    cols = np.concatenate([np.arange(s * n_times, (s + 1) * n_times) for s in sources])
    mean, std, corr = correlation(S[:, cols])
    index = np.column_stack([cols // n_times, cols % n_times])
    return SignalStatistics(mean, std, corr, index)


class Reconstructor:
    """Assumed-speed operator plus the solver shared by all samples."""

    def __init__(self, setup: Setup, assumed=None, params: SigmaReconParams | None = None):
        self.setup = setup
        self.assumed = setup.assumed_speed() if assumed is None else assumed
        self.K_assumed = setup.forward(self.assumed)
        self.solver = SpectralTikhonov(self.K_assumed, setup.M,
                                       mass_solve=setup.mass_factor.solve)
        self.params = params or SigmaReconParams()

    def power_densities(self, K_true):
        """Oracle-beta Tikhonov reconstruction of every power density."""
        S = self.setup
        out = []
        for H in S.H_true:
            I = K_true @ H
            beta, res = optimal_beta_search(self.K_assumed, I, H, S.M, solver=self.solver,
                                            bounds=S.log_beta_bounds, factor=S.beta_factor)
            out.append((res.h, beta, res.error / m_norm(S.M, H), I))
        return out

    def sample(self, index: int, seed: int, mu: float | None = None) -> SampleResult:
        S = self.setup
        t0 = time.perf_counter()
        c = S.sound_speed(mu=mu, seed=seed)
        K = S.forward(c)
        hs = self.power_densities(K)
        res = reconstruct_conductivity(S.mesh, [(h, f) for (h, *_), f in zip(hs, S.currents)],
                                       self.params, mass_solve=S.mass_factor.solve)
        return SampleResult(index, seed, res.sigma, [h for h, *_ in hs],
                            [b for _, b, _, _ in hs], [e for _, _, e, _ in hs],
                            hs[0][3], time.perf_counter() - t0)


def run_ensemble(setup: Setup, n_samples: int, *, master_seed: int | None = None,
                 mu: float | None = None, params: SigmaReconParams | None = None,
                 corr_sources=(0, 1, 2, 3), seeds=None, out_dir=None,
                 reconstructor: Reconstructor | None = None,
                 workers: int = 1) -> EnsembleSummary:
    """Run ``n_samples`` pipeline realizations and summarize them.

    Sample ``k`` uses sampler seed ``master_seed + k`` unless ``seeds`` is
    given. A failing sample is logged, skipped and listed in ``failures``.
    With fewer than two successful samples no statistics are computed.
    ``workers > 1`` runs samples in separate processes; results do not
    depend on the worker count.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    base = setup.sampler.seed if master_seed is None else master_seed
    seeds = [base + k for k in range(n_samples)] if seeds is None else list(seeds)
    if len(seeds) != n_samples:
        raise ValueError("need one seed per sample")
    rec = reconstructor or Reconstructor(setup, params=params)
    samples, failures = [], []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(_guarded_sample, [rec] * n_samples,
                                     range(n_samples), seeds, [mu] * n_samples))
    else:
        outcomes = (_guarded_sample(rec, k, seed, mu) for k, seed in enumerate(seeds))
    for k, (seed, s) in enumerate(zip(seeds, outcomes)):
        if isinstance(s, str):
            log.warning("sample %d (seed %d) failed: %s", k, seed, s)
            failures.append((k, seed, s))
            continue
        log.info("sample %d: %.1f s, beta* %s", k, s.seconds, ["%.2e" % b for b in s.betas])
        samples.append(s)
        if out_dir is not None:
            _write_sample(Path(out_dir), s, setup)
    summary = EnsembleSummary(len(samples), None, samples=samples, failures=failures)
    if len(samples) >= 2:
        summary.sigma = mean_std([s.sigma for s in samples])
        summary.H = [mean_std([s.H[j] for s in samples]) for j in range(len(samples[0].H))]
        summary.signals = signal_statistics([s.signals for s in samples],
                                            rec.K_assumed.n_times, corr_sources)
    if out_dir is not None:
        write_summary(Path(out_dir), summary, setup)
    return summary


def _guarded_sample(rec: Reconstructor, k: int, seed: int, mu):
    try:
        return rec.sample(k, seed, mu)
    except Exception as exc:  # noqa: BLE001 - a sample failure must not end the run
        return f"{type(exc).__name__}: {exc}"


def _write_sample(out: Path, s: SampleResult, setup: Setup) -> None:
    d = fileio.ensure_dir(out / f"sample_{s.index:04d}")
    fileio.write_field(d / "sigma.field", s.sigma)
    for h, f in zip(s.H, setup.currents):
        fileio.write_field(d / f"H_{f.name}.field", h)


def write_summary(out: Path, summary: EnsembleSummary, setup: Setup) -> list[Path]:
    fileio.ensure_dir(out)
    written = []
    if summary.sigma is not None:
        for name, st in [("sigma", summary.sigma)] + [
                (f"H_{f.name}", st) for f, st in zip(setup.currents, summary.H)]:
            for kind in ("mean", "std"):
                p = out / f"{kind}_{name}.field"
                fileio.write_field(p, getattr(st, kind))
                written.append(p)
        p = out / "corr.bin"
        fileio.write_matrix(p, summary.signals.corr, setup.eta, tag="corr")
        written.append(p)
    # no timings here: reruns must reproduce the file byte for byte
    rows = [[s.index, s.seed, "ok", *s.betas, *s.errors] for s in summary.samples]
    n_cur = len(setup.currents)
    rows += [[k, seed, msg.replace(",", ";"), *([""] * (2 * n_cur))]
             for k, seed, msg in summary.failures]
    rows.sort(key=lambda r: r[0])
    names = [f.name for f in setup.currents]
    p = out / "report.csv"
    fileio.write_csv(p, ["sample", "seed", "status", *[f"beta_{n}" for n in names],
                         *[f"error_{n}" for n in names]], rows)
    written.append(p)
    return written


@dataclass
class SweepRow:
    mu: float
    error: float
    beta: float
    at_lower_bound: bool
    h: np.ndarray


def mu_sweep(setup: Setup, mu_values, *, seed: int | None = None, current: int = 0,
             reconstructor: Reconstructor | None = None) -> list[SweepRow]:
    """Reconstruction error and oracle ``beta*`` for one structure realization."""
    mu_values = [float(m) for m in mu_values]
    if any(m < 0 for m in mu_values):
        raise ValueError("mu values must be nonnegative")
    rec = reconstructor or Reconstructor(setup)
    S = setup
    H = S.H_true[current]
    nH = m_norm(S.M, H)
    seed = S.sampler.seed if seed is None else seed
    rows = []
    for mu in mu_values:
        K = S.forward(S.sound_speed(mu=mu, seed=seed))
        beta, res = optimal_beta_search(rec.K_assumed, K @ H, H, S.M, solver=rec.solver,
                                        bounds=S.log_beta_bounds, factor=S.beta_factor)
        rows.append(SweepRow(mu, res.error / nH, beta, res.at_lower_bound, res.h))
        log.info("mu=%.3f: error %.4f, beta* %.3e", mu, rows[-1].error, beta)
    return rows


def angular_spectrum(mesh, values, n_theta: int = 256, radii=None) -> np.ndarray:
    """Energy of the angular Fourier harmonics of a nodal field.

    The field is sampled on circles (default radii 0.3 to 0.9) by P1
    interpolation and the squared FFT magnitudes are averaged over radii.
    """
    from scipy.interpolate import LinearNDInterpolator
    radii = np.linspace(0.3, 0.9, 7) if radii is None else np.asarray(radii)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    x = (radii[:, None] * np.cos(th)).ravel()
    y = (radii[:, None] * np.sin(th)).ravel()
    interp = LinearNDInterpolator(mesh.nodes, values)
    v = interp(x, y).reshape(len(radii), n_theta)
    F = np.fft.rfft(v, axis=1) / n_theta
    return np.mean(np.abs(F) ** 2, axis=0)


@dataclass
class ArtifactDemo:
    n_sources: int
    h: np.ndarray
    h_true: np.ndarray
    error: float
    beta: float
    spectrum: np.ndarray
    rank: int

    def harmonic_share(self, k: int, k_min: int = 2) -> float:
        """Fraction of angular energy (harmonics >= ``k_min``) in multiples of ``k``."""
        e = self.spectrum
        tot = e[k_min:].sum()
        return float(e[k::k].sum() / tot) if tot > 0 else 0.0

    def dominant_harmonic(self, k_min: int = 6) -> int:
        """Strongest angular harmonic at or above ``k_min``.

        The lowest harmonics carry the smooth error of a wrong speed; the
        star pattern of sparse sources appears above them.
        """
        return int(k_min + np.argmax(self.spectrum[k_min:]))


def few_source_artifact_demo(setup: Setup, n_sources: int, speed_ratio: float = 1.05,
                             current: int = 0) -> ArtifactDemo:
    """Reconstruct with ``n_sources`` transducers and assumed speed ``ratio * c``.

    The true speed has the inclusion and no structure; the residual
    ``h - H`` is analysed for angular harmonics tied to the source count.
    """
    if n_sources < 1:
        raise ValueError("need at least one source")
    S = replace(setup, n_sources=n_sources)
    c = S.sound_speed(mu=0.0)
    K = S.forward(c)
    K_assumed = K if speed_ratio == 1.0 else S.forward(c.scaled(speed_ratio, "assumed"))
    H = S.H_true[current]
    solver = SpectralTikhonov(K_assumed, S.M, mass_solve=S.mass_factor.solve)
    beta, res = optimal_beta_search(K_assumed, K @ H, H, S.M, solver=solver,
                                    bounds=S.log_beta_bounds, factor=S.beta_factor)
    rank = int(np.sum(solver.lam > 1e-10 * solver.lam.max()))
    spec = angular_spectrum(S.mesh, res.h - H)
    return ArtifactDemo(n_sources, res.h, H, res.error / m_norm(S.M, H), beta, spec, rank)


def region_std(mesh, std, r_lo: float, r_hi: float) -> float:
    """Area-weighted mean of a nodal field over the annulus ``r_lo <= r < r_hi``."""
    r = np.hypot(*mesh.nodes.T)
    sel = (r >= r_lo) & (r < r_hi)
    w = fem.lumped_mass(mesh)[sel]
    return float(w @ np.asarray(std)[sel] / w.sum())
