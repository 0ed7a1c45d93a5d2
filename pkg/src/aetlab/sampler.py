"""Random structured sound-speed realizations.

A structure field takes values in {-1, 0, 1}: two power-law spectral fields
with different decay exponents are thresholded at a quantile level over a
control disk and subtracted. The sound speed multiplies a background plus
inclusion profile by ``1 + mu * s``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import gaussian_filter

from .wave import CartesianGrid, SoundSpeedField

C_BG = 1.0
# 1650 / 1500 after scaling speeds by the background value
C_INCL = 1.1
INCLUSION_CENTER = (0.0, 0.375)
INCLUSION_RADIUS = 0.25


@dataclass(frozen=True)
class SamplerParams:
    f0: float = 20.0
    ell: float = 25.0
    c0: float = 0.5
    c1: float = 1.0
    N: int = 257
    beta0: float = 3.3
    beta1: float = 2.8
    gamma_cut: float = 0.35
    u_radius_ratio: float = 0.8
    mu: float = 0.05
    seed: int = 0
    shared_phases: bool = True
    smoothing: float = 0.0

    def __post_init__(self):
        if not 0 < self.gamma_cut < 1:
            raise ValueError("gamma_cut must lie in (0, 1)")
        if self.beta1 <= 0 or self.beta0 < self.beta1:
            raise ValueError("need beta0 > beta1 > 0")
        if not self.f0 < self.ell * np.sqrt(2):
            raise ValueError("f0 must be below ell * sqrt(2)")
        if self.N < 3:
            raise ValueError("N too small")

    @property
    def xi(self) -> np.ndarray:
        j = np.arange(self.N)
        return self.ell * (2 * j / (self.N - 1) - 1)


@dataclass
class StructureField:
    """Grid values ``s[j, k]`` over ``[-ell, ell]^2`` plus the wave-grid scale.

    ``half_width`` is the wave-grid half width onto which ``[-ell, ell]``
    is stretched.
    """

    values: np.ndarray
    ell: float
    half_width: float
    smoothing: float = 0.0

    def __call__(self, x, y) -> np.ndarray:
        """Bilinear interpolant at wave-grid coordinates."""
        n = self.values.shape[0]
        xi = np.linspace(-self.ell, self.ell, n)
        v = self.values.astype(float)
        if self.smoothing > 0:
            # width given in wave-grid units
            v = gaussian_filter(v, self.smoothing * (n - 1) / (2 * self.half_width))
        interp = RegularGridInterpolator((xi, xi), v, bounds_error=False, fill_value=0.0)
        scale = self.ell / self.half_width
        pts = np.stack([np.ravel(x) * scale, np.ravel(y) * scale], axis=-1)
        return interp(pts).reshape(np.shape(x))

    def on_grid(self, grid: CartesianGrid) -> np.ndarray:
        X, Y = grid.mesh()
        return self(X, Y)

    def to_pgm(self, path) -> None:
        """Write as an 8-bit PGM image (-1 -> 0, 0 -> 127, 1 -> 255)."""
        img = np.round((np.asarray(self.values, float) + 1) * 127.5).clip(0, 255)
        # image rows run top to bottom along the second axis
        img = img.T[::-1].astype(np.uint8)
        with open(path, "wb") as fh:
            fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
            fh.write(img.tobytes())


def draw_phases(N: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform phases on ``(-pi, pi]``."""
    return np.pi - 2 * np.pi * rng.random((N, N))


def spectral_field(params: SamplerParams, beta: float, phases) -> np.ndarray:
    """``q = |IDFT(V_beta(xi; theta))|`` on the N x N grid."""
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (params.N, params.N):
        raise ValueError("phase array has the wrong shape")
    if np.any(phases <= -np.pi - 1e-12) or np.any(phases > np.pi + 1e-12):
        raise ValueError("phases must lie in (-pi, pi]")
    xi = params.xi
    r = np.hypot(xi[:, None], xi[None, :])
    v = np.zeros((params.N, params.N), dtype=complex)
    band = (r > 0) & (r < params.f0)
    v[band] = params.c1 * r[band] ** (-beta / 2) * np.exp(-1j * phases[band])
    v[r == 0] = params.c0
    return np.abs(np.fft.ifft2(v))


def control_mask(params: SamplerParams, half_width: float, omega_radius: float = 1.0):
    """Grid points lying in the control disk, in sampler coordinates."""
    xi = params.xi
    r = np.hypot(xi[:, None], xi[None, :])
    radius = params.u_radius_ratio * omega_radius * params.ell / half_width
    return r < radius


def quantile_cut(field, region_mask, gamma_cut: float) -> float:
    """Height ``r`` whose strict below-fraction over the region is closest to gamma.

    Ties go to the smallest such ``r``.
    """
    vals = np.asarray(field)[np.asarray(region_mask, dtype=bool)]
    if vals.size == 0:
        raise ValueError("empty control region")
    u = np.unique(vals)
    cand = np.append(u, np.nextafter(u[-1], np.inf))
    below = np.searchsorted(np.sort(vals), cand, side="left") / vals.size
    k = int(np.argmin(np.abs(gamma_cut - below)))
    return float(cand[k])


def threshold(field, r: float) -> np.ndarray:
    return (np.asarray(field) < r).astype(np.int8)


def sample_structure(params: SamplerParams, half_width: float = 1.6) -> StructureField:
    """Draw one structure field ``s = Qhat(beta0) - Qhat(beta1)``."""
    rng = np.random.default_rng(params.seed)
    th0 = draw_phases(params.N, rng)
    th1 = th0 if params.shared_phases else draw_phases(params.N, rng)
    mask = control_mask(params, half_width)
    q0 = spectral_field(params, params.beta0, th0)
    q1 = spectral_field(params, params.beta1, th1)
    Q0 = threshold(q0, quantile_cut(q0, mask, params.gamma_cut))
    Q1 = threshold(q1, quantile_cut(q1, mask, params.gamma_cut))
    s = (Q0 - Q1).astype(np.int8)
    return StructureField(s, params.ell, half_width, params.smoothing)


def inclusion_indicator(x, y, center=INCLUSION_CENTER, radius=INCLUSION_RADIUS):
    return ((np.asarray(x) - center[0]) ** 2 + (np.asarray(y) - center[1]) ** 2
            < radius ** 2).astype(float)


def build_sound_speed(structure: StructureField | None, grid: CartesianGrid, *,
                      c_bg: float = C_BG, c_incl: float = C_INCL, mu: float = 0.05,
                      center=INCLUSION_CENTER, radius=INCLUSION_RADIUS,
                      label="true", lower_bound=0.5) -> SoundSpeedField:
    """``c = (c_bg + chi_D (c_incl - c_bg)) (1 + mu s)`` on the wave grid."""
    if c_bg <= 0 or c_incl <= 0:
        raise ValueError("speeds must be positive")
    X, Y = grid.mesh()
    base = c_bg + inclusion_indicator(X, Y, center, radius) * (c_incl - c_bg)
    s = np.zeros_like(base) if structure is None else structure.on_grid(grid)
    factor = 1 + mu * s
    if np.any(factor <= 0):
        raise ValueError("nonpositive sound speed; mu too large")
    return SoundSpeedField(grid, base * factor, label=label, lower_bound=lower_bound)


def realization_params(params: SamplerParams, index: int) -> SamplerParams:
    """Parameters for realization ``index`` (seed offset by the index)."""
    return replace(params, seed=params.seed + index)
