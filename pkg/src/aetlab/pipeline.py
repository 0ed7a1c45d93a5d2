"""Shared experiment setup: geometry, waves, data synthesis and forward operators."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import fem
from .electrostatics import (BoundaryCurrent, NeumannSolver, power_density,
                             standard_currents)
from .forward import ForwardMatrix, assemble_forward_matrix, linearized_signal
from .linalg import cholesky_factor
from .mesh import TriangleMesh, generate_disk_mesh
from .sampler import (C_BG, C_INCL, INCLUSION_CENTER, INCLUSION_RADIUS,
                      SamplerParams, build_sound_speed, inclusion_indicator,
                      realization_params, sample_structure)
from .wave import (CartesianGrid, SoundSpeedField, SourceConfig, WaveRecord,
                   make_time_axis, simulate_wave)

log = logging.getLogger(__name__)


@dataclass
class Setup:
    """Numerical parameters of one AET experiment.

    Defaults reproduce the full-size configuration; :meth:`desk` returns a
    reduced one that runs in minutes on a single core.
    """

    target_nodes: int = 20100
    grid_n: int = 512
    half_width: float = 1.6
    inner_half_width: float = 1.1
    n_sources: int = 36
    points_per_source: int = 9
    arc_degrees: float = 10.0
    frequency: float = 5.0
    # signal scale; sets where the absolute beta bracket sits relative to ||K||^2
    amplitude: float = 700.0
    n_records: int = 300
    T: float | None = None
    damping: float = 30.0
    eta: float = 1e-3
    sigma_background: float = 1.0
    sigma_contrast: float = 0.5
    c_bg: float = C_BG
    c_incl: float = C_INCL
    mu_max: float = 0.10
    log_beta_bounds: tuple = (-8.0, 2.0)
    beta_factor: float = 1.1
    radius: float = 1.0
    sampler: SamplerParams = field(default_factory=SamplerParams)

    @classmethod
    def desk(cls, **kw):
        base = dict(target_nodes=1500, grid_n=160, n_records=120)
        base.update(kw)
        return cls(**base)

    @cached_property
    def mesh(self) -> TriangleMesh:
        return generate_disk_mesh(self.radius, self.target_nodes)

    def with_mesh(self, mesh: TriangleMesh) -> "Setup":
        """Use an existing mesh (e.g. read from disk) instead of generating one."""
        self.__dict__["mesh"] = mesh
        return self

    @cached_property
    def grid(self) -> CartesianGrid:
        return CartesianGrid(self.half_width, self.inner_half_width, self.grid_n)

    @cached_property
    def sources(self) -> SourceConfig:
        return SourceConfig(self.n_sources, self.points_per_source, self.arc_degrees,
                            frequency=self.frequency, amplitude=self.amplitude)

    @cached_property
    def time_axis(self):
        c_min = (1 - self.mu_max) * min(self.c_bg, self.c_incl)
        c_max = (1 + self.mu_max) * max(self.c_bg, self.c_incl)
        return make_time_axis(self.grid, c_min, c_max, self.n_records, self.T)

    @cached_property
    def probe(self):
        return fem.interpolation_matrix(self.grid.x, self.grid.x, self.mesh.nodes)

    @cached_property
    def M(self):
        return fem.assemble_mass(self.mesh)

    @cached_property
    def mass_factor(self):
        return cholesky_factor(self.M)

    @cached_property
    def sigma_true(self) -> np.ndarray:
        x, y = self.mesh.nodes.T
        return self.sigma_background + self.sigma_contrast * inclusion_indicator(x, y)

    @cached_property
    def currents(self) -> list[BoundaryCurrent]:
        return standard_currents(self.mesh)

    @cached_property
    def inclusion_mask(self) -> np.ndarray:
        x, y = self.mesh.nodes.T
        return inclusion_indicator(x, y).astype(bool)

    def power_densities(self, sigma=None) -> list[np.ndarray]:
        sigma = self.sigma_true if sigma is None else sigma
        solver = NeumannSolver(self.mesh, sigma)
        return [power_density(self.mesh, sigma, solver.solve(f), self.mass_factor)
                for f in self.currents]

    @cached_property
    def H_true(self) -> list[np.ndarray]:
        return self.power_densities()

    def sound_speed(self, mu: float | None = None, seed: int | None = None,
                    structure=None) -> SoundSpeedField:
        """True sound speed for a structure realization (``seed``) and ``mu``."""
        p = self.sampler
        mu = p.mu if mu is None else mu
        if structure is None and mu != 0:
            sp_ = p if seed is None else realization_params(p, seed)
            structure = sample_structure(sp_, self.half_width)
        return build_sound_speed(structure, self.grid, c_bg=self.c_bg,
                                 c_incl=self.c_incl, mu=mu)

    def assumed_speed(self, scale: float = 1.0) -> SoundSpeedField:
        return SoundSpeedField.constant(self.grid, self.c_bg * scale)

    def simulate(self, c: SoundSpeedField, sources=None) -> list[WaveRecord]:
        ta = self.time_axis
        idx = range(self.sources.source_count) if sources is None else sources
        return [simulate_wave(self.grid, c, self.sources, s, ta.dt, ta.T,
                              record_every=ta.stride, damping=self.damping,
                              probe=self.probe)
                for s in idx]

    def forward(self, c: SoundSpeedField, sources=None, waves=None) -> ForwardMatrix:
        waves = self.simulate(c, sources) if waves is None else waves
        return assemble_forward_matrix(self.mesh, waves, self.eta, self.M,
                                       provenance=c.label)

    def synthesize(self, K: ForwardMatrix, H=None) -> list[np.ndarray]:
        """Linearized data ``I = K H`` for each boundary current."""
        H = self.H_true if H is None else H
        return [linearized_signal(K, h) for h in H]
