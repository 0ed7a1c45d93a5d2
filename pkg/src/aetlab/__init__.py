"""Acousto-electric tomography under sound-speed uncertainty.

Finite elements for the conductivity equation, an FDTD acoustic solver,
the linear map from power densities to boundary power signals, Tikhonov
and L1-TV reconstructions, and Monte Carlo studies over random sound speeds.
"""
from .electrostatics import (BoundaryCurrent, NeumannSolver, PowerSignal, boundary_power_signal,
                             power_density, solve_neumann, standard_currents)
from .forward import ForwardMatrix, assemble_forward_matrix, linearized_signal, operator_norm_diff
from .mesh import MeshError, TriangleMesh, generate_disk_mesh
from .pipeline import Setup
from .recon_power import SpectralTikhonov, TikhonovResult, optimal_beta_search, tikhonov_solve
from .recon_sigma import (LinearizedOperator, SigmaReconParams, apply_frechet, linearized_step,
                          reconstruct_conductivity)
from .sampler import SamplerParams, StructureField, build_sound_speed, sample_structure
from .uq import few_source_artifact_demo, mu_sweep, run_ensemble
from .wave import (CartesianGrid, SoundSpeedField, SourceConfig, WaveRecord, simulate_wave,
                   wave_discrepancy)

__version__ = "0.1.0"
