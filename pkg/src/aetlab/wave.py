"""Explicit finite-difference solver for the 2D scalar wave equation.

Solves ``p_tt - c^2 Lap p = S`` with zero initial data on ``[-L, L]^2`` by
second-order leapfrog. A quadratic damping sponge occupies
``L' < |x|_inf <= L`` and emulates free-space propagation inside
``[-L', L']^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import interpolation_matrix
from .mesh import TriangleMesh


@dataclass(frozen=True)
class CartesianGrid:
    half_width: float = 1.6
    inner_half_width: float = 1.1
    n: int = 512

    def __post_init__(self):
        if not 0 < self.inner_half_width < self.half_width:
            raise ValueError("need 0 < inner_half_width < half_width")
        if self.inner_half_width < 1.0:
            raise ValueError("the unit disk must fit inside the inner square")
        if self.n < 8:
            raise ValueError("grid too small")

    @property
    def h(self) -> float:
        return 2 * self.half_width / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n)

    def mesh(self):
        """Coordinate arrays ``(X, Y)`` indexed ``[ix, iy]``."""
        return np.meshgrid(self.x, self.x, indexing="ij")


@dataclass
class SoundSpeedField:
    """Sound speed sampled on a :class:`CartesianGrid` (``values[ix, iy]``)."""

    grid: CartesianGrid
    values: np.ndarray
    label: str = "true"
    lower_bound: float = 0.5

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ValueError("sound speed shape does not match the grid")
        lam = self.lower_bound
        if not 0 < lam < 1:
            raise ValueError("lower bound must lie in (0, 1)")
        if self.values.min() < lam or self.values.max() > 1 / lam:
            raise ValueError("sound speed outside the admissible range "
                             f"[{lam}, {1 / lam}]")

    @classmethod
    def constant(cls, grid: CartesianGrid, value: float = 1.0, label="assumed"):
        return cls(grid, np.full((grid.n, grid.n), float(value)), label=label)

    def scaled(self, factor: float, label=None) -> "SoundSpeedField":
        return SoundSpeedField(self.grid, self.values * factor,
                               label=label or self.label,
                               lower_bound=self.lower_bound)


def hann_sine_pulse(t, frequency: float, amplitude: float = 1.0):
    """One-cycle sine burst under a Hann window, supported on ``[0, 1/f]``."""
    t = np.asarray(t, dtype=float)
    s = frequency * t
    w = np.where((s >= 0) & (s <= 1), np.sin(np.pi * s) ** 2, 0.0)
    return amplitude * w * np.sin(2 * np.pi * s)


@dataclass
class SourceConfig:
    """Transducers evenly spaced in angle on the unit circle.

    Each transducer is ``points_per_source`` in-phase point sources spread
    over an arc of ``arc_degrees`` centred on its angular position; an arc of
    a circle about the origin focuses radially inward.
    """

    source_count: int = 36
    points_per_source: int = 9
    arc_degrees: float = 10.0
    radius: float = 1.0
    frequency: float = 5.0
    # gives a peak pressure of about 1 inside the disk
    amplitude: float = 14.0
    angle_offset: float = 0.0

    def __post_init__(self):
        if self.source_count < 1 or self.points_per_source < 1:
            raise ValueError("need at least one source and one point")

    @property
    def angles(self) -> np.ndarray:
        return self.angle_offset + 2 * np.pi * np.arange(self.source_count) / self.source_count

    def points(self, index: int) -> np.ndarray:
        if not 0 <= index < self.source_count:
            raise IndexError(f"source index {index} out of range")
        th0 = self.angles[index]
        half = np.radians(self.arc_degrees) / 2
        if self.points_per_source == 1:
            th = np.array([th0])
        else:
            th = th0 + np.linspace(-half, half, self.points_per_source)
        return self.radius * np.column_stack([np.cos(th), np.sin(th)])

    def pulse(self, t):
        # normalise the summed strength so it does not depend on point count
        return hann_sine_pulse(t, self.frequency, self.amplitude) / self.points_per_source

    @property
    def duration(self) -> float:
        return 1.0 / self.frequency


@dataclass
class WaveRecord:
    """Nodal pressure ``values[i, j] = p(node_j, t_i)`` for ``t_i = i dt``."""

    values: np.ndarray
    dt: float
    source_id: int = 0

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> float:
        return self.dt * (self.n_times - 1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_times)


def cfl_limit(grid: CartesianGrid, c_max: float) -> float:
    """Largest admissible step, half of the 2D leapfrog stability limit."""
    return 0.5 * grid.h / (np.sqrt(2.0) * c_max)


@dataclass(frozen=True)
class TimeAxis:
    dt: float
    n_steps: int
    stride: int

    @property
    def T(self) -> float:
        return self.dt * self.n_steps

    @property
    def record_dt(self) -> float:
        return self.dt * self.stride

    @property
    def n_records(self) -> int:
        return self.n_steps // self.stride


def make_time_axis(grid: CartesianGrid, c_min: float, c_max: float,
                   n_records: int = 300, T: float | None = None) -> TimeAxis:
    """Uniform time axis shared by every simulation of an experiment.

    ``T`` defaults to three crossings of the inner square at the slowest
    speed; ``dt`` is the largest step not exceeding the CFL limit that makes
    ``T`` an exact multiple of the recording interval.
    """
    if T is None:
        T = 3 * (2 * grid.inner_half_width) / c_min
    dt_max = cfl_limit(grid, c_max)
    stride = int(np.ceil(T / (n_records * dt_max)))
    n_steps = stride * n_records
    return TimeAxis(dt=T / n_steps, n_steps=n_steps, stride=stride)


def damping_profile(grid: CartesianGrid, strength: float = 30.0) -> np.ndarray:
    """Quadratic sponge coefficient, zero inside ``[-L', L']^2``."""
    X, Y = grid.mesh()
    w = grid.half_width - grid.inner_half_width
    dx = np.clip((np.abs(X) - grid.inner_half_width) / w, 0, None)
    dy = np.clip((np.abs(Y) - grid.inner_half_width) / w, 0, None)
    return strength * (dx ** 2 + dy ** 2)


def _source_weights(grid: CartesianGrid, pts: np.ndarray):
    """Bilinear spreading of point sources onto grid cells, scaled by 1/h^2."""
    B = interpolation_matrix(grid.x, grid.x, pts)
    w = np.asarray(B.sum(axis=0)).ravel() / grid.h ** 2
    return w.reshape(grid.n, grid.n)


def simulate_wave(grid: CartesianGrid, c: SoundSpeedField, src: SourceConfig,
                  source_index: int, dt: float, T: float,
                  mesh: TriangleMesh | None = None, record_every: int = 1,
                  damping: float = 30.0, probe=None) -> WaveRecord:
    """Leapfrog solution for one transducer, sampled at the mesh nodes.

    Records every ``record_every`` steps, starting at ``t = 0``. When
    ``mesh`` is None the full grid field is recorded instead (flattened).
    ``probe`` may be a sparse matrix mapping the grid field to output values
    and overrides ``mesh``.
    """
    if c.grid != grid:
        raise ValueError("sound speed defined on a different grid")
    if T <= 0:
        raise ValueError("T must be positive")
    limit = cfl_limit(grid, float(c.values.max()))
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt:.4g} violates the CFL bound {limit:.4g}")
    pts = src.points(source_index)
    if np.any(np.abs(pts) > grid.inner_half_width):
        raise ValueError("source outside the interior of the grid")

    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * T:
        raise ValueError("T must be an integer multiple of dt")
    if n_steps % record_every:
        raise ValueError("number of steps must be a multiple of record_every")

    if probe is None:
        probe = (interpolation_matrix(grid.x, grid.x, mesh.nodes)
                 if mesh is not None else None)
    n = grid.n
    c2dt2 = (c.values * dt / grid.h) ** 2
    sig = damping_profile(grid, damping) * dt / 2
    a_next = 1.0 / (1.0 + sig)
    a_prev = 1.0 - sig
    sw = _source_weights(grid, pts) * dt ** 2
    src_active = np.flatnonzero(sw.ravel())
    sw_active = sw.ravel()[src_active]

    p_prev = np.zeros((n, n))
    p = np.zeros((n, n))
    lap = np.zeros((n, n))
    n_rec = n_steps // record_every + 1
    width = probe.shape[0] if probe is not None else n * n
    out = np.zeros((n_rec, width))
    pulse = src.pulse(dt * np.arange(n_steps + 1))
    t_end = src.duration

    for k in range(n_steps):
        # p holds time k*dt, p_prev holds (k-1)*dt
        lap[1:-1, 1:-1] = (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:]
                           + p[1:-1, :-2] - 4 * p[1:-1, 1:-1])
        p_new = 2 * p - a_prev * p_prev + c2dt2 * lap
        if k * dt <= t_end + dt:
            p_new.ravel()[src_active] += sw_active * pulse[k]
        p_new *= a_next
        p_new[0, :] = p_new[-1, :] = p_new[:, 0] = p_new[:, -1] = 0.0
        p_prev, p = p, p_new
        if (k + 1) % record_every == 0:
            row = (k + 1) // record_every
            out[row] = probe @ p.ravel() if probe is not None else p.ravel()
    return WaveRecord(out, dt * record_every, source_index)


def wave_discrepancy(p_true: WaveRecord, p_assumed: WaveRecord, mass=None) -> float:
    """``max_t ||p_assumed(t) - p_true(t)||`` over the recorded times.

    The spatial norm is the mass-matrix L2 norm when ``mass`` is given and
    the Euclidean nodal norm otherwise.
    """
    if p_true.values.shape != p_assumed.values.shape:
        raise ValueError("records have different shapes")
    if not np.isclose(p_true.dt, p_assumed.dt, rtol=1e-12):
        raise ValueError("records have different time steps")
    d = p_assumed.values - p_true.values
    if mass is None:
        sq = np.einsum("ij,ij->i", d, d)
    else:
        sq = np.einsum("ij,ij->i", d, (mass @ d.T).T)
    return float(np.sqrt(np.max(np.maximum(sq, 0.0))))
