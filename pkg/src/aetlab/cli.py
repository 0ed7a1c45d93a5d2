"""Command-line entry point: ``aetlab <subcommand> --config run.ini --out dir``.

Every subcommand writes its artifacts under the output directory together
with ``manifests/<subcommand>.json`` listing inputs and outputs with their
SHA-256 digests. Downstream subcommands check their inputs against the
producer's manifest before using them.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .config import ConfigError, ExperimentConfig, canonical, load_config, with_seed
from .electrostatics import PowerSignal
from .metrics import (centroid, largest_superlevel_component, rasterize, region_mean,
                      relative_error)
from .recon_power import SpectralTikhonov, optimal_beta_search
from .recon_sigma import reconstruct_conductivity

log = logging.getLogger("aetlab")

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE, EXIT_VERIFY = 0, 2, 3, 4


class PipelineError(RuntimeError):
    pass


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Bookkeeping of one subcommand invocation."""

    def __init__(self, name: str, cfg: ExperimentConfig, out: Path):
        self.name = name
        self.cfg = cfg
        self.out = fileio.ensure_dir(out)
        self.inputs: dict = {}
        self.outputs: list = []
        self.scalars: dict = {}

    def path(self, rel) -> Path:
        p = self.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def produced(self, rel) -> Path:
        self.outputs.append(str(rel))
        return self.path(rel)

    def require(self, rel, producer: str) -> Path:
        """Check that ``rel`` exists and matches the digest ``producer`` recorded."""
        p = self.out / rel
        if not p.exists():
            raise PipelineError(f"missing input artifact '{rel}' "
                                f"(run the '{producer}' subcommand first)")
        mpath = self.out / "manifests" / f"{producer}.json"
        if not mpath.exists():
            raise PipelineError(f"missing manifest of '{producer}' for input '{rel}'")
        recorded = json.loads(mpath.read_text())["outputs"].get(str(rel))
        digest = sha256(p)
        if recorded is None:
            raise PipelineError(f"'{rel}' is not listed in the '{producer}' manifest")
        if recorded != digest:
            raise PipelineError(f"'{rel}' changed after '{producer}' produced it")
        self.inputs[str(rel)] = digest
        return p

    def finish(self) -> Path:
        manifest = {
            "command": self.name,
            "config_sha256": hashlib.sha256(canonical(self.cfg).encode()).hexdigest(),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": {rel: sha256(self.out / rel) for rel in sorted(self.outputs)},
            "scalars": {k: _jsonable(v) for k, v in sorted(self.scalars.items())},
        }
        p = self.path(Path("manifests") / f"{self.name}.json")
        p.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return p


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    return v


def _mesh(run: Run):
    mesh = fileio.read_mesh(run.require("mesh.txt", "mesh"), run.cfg.setup.radius)
    return run.cfg.setup.with_mesh(mesh)


def _field_pgm(run: Run, rel, values, mesh, vmin=None, vmax=None):
    img = rasterize(mesh, values, 128)
    lo = np.nanmin(img) if vmin is None else vmin
    fileio.write_pgm(run.produced(rel), np.nan_to_num(img, nan=lo), vmin, vmax)


# ---------------------------------------------------------------- subcommands


def cmd_mesh(run: Run):
    """Generate the disk mesh."""
    S = run.cfg.setup
    mesh = S.mesh
    fileio.write_mesh(run.produced("mesh.txt"), mesh)
    run.scalars.update(nodes=mesh.n_nodes, triangles=mesh.n_triangles,
                       boundary=len(mesh.boundary_nodes), min_angle=mesh.min_angle())


def cmd_sample_c(run: Run):
    """Draw the true sound speed and write the assumed one."""
    S = run.cfg.setup
    p = S.sampler
    from .sampler import sample_structure
    structure = sample_structure(p, S.half_width)
    c = S.sound_speed(structure=structure, mu=p.mu)
    fileio.write_speed(run.produced("c_true.bin"), c)
    fileio.write_speed(run.produced("c_assumed.bin"), S.assumed_speed())
    structure.to_pgm(run.produced("structure.pgm"))
    fileio.write_pgm(run.produced("c_true.pgm"), c.values)
    run.scalars.update(mu=p.mu, seed=p.seed, c_min=c.values.min(), c_max=c.values.max(),
                       shared_phases=p.shared_phases)


def cmd_simulate(run: Run):
    """Simulate every wave source for the true and assumed speeds."""
    S = _mesh(run)
    for kind in ("true", "assumed"):
        c = fileio.read_speed(run.require(f"c_{kind}.bin", "sample-c"), label=kind)
        if c.grid != S.grid:
            raise PipelineError(f"c_{kind}.bin grid does not match the configured wave grid")
        for w in S.simulate(c):
            fileio.write_wave(run.produced(f"waves/{kind}_s{w.source_id:03d}.bin"), w)
    ta = S.time_axis
    run.scalars.update(sources=S.n_sources, records=ta.n_records + 1, dt=ta.record_dt,
                       T=ta.T, steps=ta.n_steps)


def _waves(run: Run, kind: str, n_sources: int):
    return [fileio.read_wave(run.require(f"waves/{kind}_s{s:03d}.bin", "simulate"))
            for s in range(n_sources)]


def cmd_assemble(run: Run):
    """Assemble the true and assumed forward matrices."""
    from .forward import assemble_forward_matrix
    S = _mesh(run)
    for kind in ("true", "assumed"):
        K = assemble_forward_matrix(S.mesh, _waves(run, kind, S.n_sources), S.eta, S.M,
                                    provenance=kind)
        fileio.write_forward(run.produced(f"K_{kind}.bin"), K)
        run.scalars[f"K_{kind}_fro"] = float(np.linalg.norm(K.matrix))
        run.scalars[f"K_{kind}_shape"] = list(K.shape)


def cmd_synth_data(run: Run):
    """Synthesize boundary power signals from the phantom."""
    S = _mesh(run)
    K = fileio.read_forward(run.require("K_true.bin", "assemble"))
    fileio.write_field(run.produced("sigma_true.field"), S.sigma_true)
    peak = 0.0
    for f, H in zip(S.currents, S.H_true):
        fileio.write_field(run.produced(f"H_true_{f.name}.field"), H)
        I = K @ H
        peak = max(peak, float(np.abs(I).max()))
        for s in range(K.n_sources):
            sig = PowerSignal(I[s * K.n_times:(s + 1) * K.n_times], K.dt, f.name, s)
            fileio.write_signal(run.produced(f"signals/I_{f.name}_s{s:03d}.csv"), sig)
    run.scalars.update(max_abs_I=peak, currents=[f.name for f in S.currents])


def cmd_recon_h(run: Run):
    """Reconstruct power densities with the oracle beta."""
    S = _mesh(run)
    K = fileio.read_forward(run.require("K_assumed.bin", "assemble"))
    solver = SpectralTikhonov(K, S.M, mass_solve=S.mass_factor.solve)
    lines = ["current,beta,at_lower_bound,error,residual,normal_residual"]
    for f in S.currents:
        I = np.concatenate([
            fileio.read_signal(run.require(f"signals/I_{f.name}_s{s:03d}.csv",
                                           "synth-data")).values
            for s in range(K.n_sources)])
        H = fileio.read_field(run.require(f"H_true_{f.name}.field", "synth-data"),
                              S.mesh.n_nodes)
        beta, res = optimal_beta_search(K, I, H, S.M, solver=solver,
                                        bounds=S.log_beta_bounds, factor=S.beta_factor)
        err = relative_error(S.M, res.h, H)
        fileio.write_field(run.produced(f"H_rec_{f.name}.field"), res.h)
        _field_pgm(run, f"H_rec_{f.name}.pgm", res.h, S.mesh)
        lines.append(f"{f.name},{beta:.6e},{res.at_lower_bound},{err:.6e},"
                     f"{res.residual:.6e},{res.normal_residual:.3e}")
        run.scalars[f"beta_{f.name}"] = beta
        run.scalars[f"error_{f.name}"] = err
    run.produced("recon_h_report.csv").write_text("\n".join(lines) + "\n")


def cmd_recon_sigma(run: Run):
    """Reconstruct the conductivity from the power densities."""
    S = _mesh(run)
    z = [(fileio.read_field(run.require(f"H_rec_{f.name}.field", "recon-h"), S.mesh.n_nodes), f)
         for f in S.currents]
    res = reconstruct_conductivity(S.mesh, z, run.cfg.sigma, mass_solve=S.mass_factor.solve)
    fileio.write_field(run.produced("sigma_rec.field"), res.sigma)
    run.produced("sigma_log.csv").write_text(res.log_csv())
    _field_pgm(run, "sigma_rec.pgm", res.sigma, S.mesh, 0.8, 1.7)
    D = S.inclusion_mask
    comp = largest_superlevel_component(S.mesh, res.sigma, 1.2)
    run.scalars.update(iterations=len(res.history),
                       inclusion_mean=region_mean(S.mesh, res.sigma, D),
                       background_mean=region_mean(S.mesh, res.sigma, ~D),
                       centroid=centroid(S.mesh, comp) if comp.any() else [np.nan, np.nan])


def cmd_ensemble(run: Run):
    """Run the Monte Carlo ensemble and write its statistics."""
    from .uq import run_ensemble
    cfg = run.cfg
    summary = run_ensemble(cfg.setup, cfg.ensemble_n, master_seed=cfg.master_seed,
                           mu=cfg.ensemble_mu, params=cfg.sigma,
                           corr_sources=cfg.corr_sources, out_dir=run.out / "ensemble",
                           workers=cfg.threads)
    for p in sorted((run.out / "ensemble").rglob("*")):
        if p.is_file():
            run.outputs.append(str(p.relative_to(run.out)))
    run.scalars.update(samples=summary.n_samples, failures=len(summary.failures))
    if summary.sigma is None:
        log.warning("fewer than two successful samples: no statistics written")
    else:
        within, across = summary.signals.block_contrast()
        run.scalars.update(corr_within=within, corr_across=across)


def cmd_mu_sweep(run: Run):
    """Reconstruction error and beta* over structure amplitudes."""
    from .uq import mu_sweep
    cfg = run.cfg
    rows = mu_sweep(cfg.setup, cfg.sweep_mu, seed=cfg.sweep_seed, current=cfg.sweep_current)
    fileio.write_csv(run.produced("mu_sweep.csv"), ["mu", "error", "beta", "at_lower_bound"],
                     [[r.mu, r.error, r.beta, r.at_lower_bound] for r in rows])
    for r in rows:
        fileio.write_field(run.produced(f"sweep/H_mu{r.mu:.3f}.field"), r.h)
    run.scalars.update(errors=[r.error for r in rows], betas=[r.beta for r in rows])


def cmd_verify(run: Run):
    """Run the acceptance suite and report pass/fail per criterion."""
    from .acceptance import AcceptanceContext, run_acceptance
    ctx = AcceptanceContext(workers=run.cfg.threads, sigma_params=run.cfg.sigma)
    results = run_acceptance(run.cfg.criteria, ctx)
    lines = [r.line() for r in results]
    run.produced("verify.txt").write_text("\n".join(lines) + "\n")
    run.scalars.update({f"criterion_{r.number}": r.passed for r in results})
    return all(r.passed for r in results)


COMMANDS = {
    "mesh": cmd_mesh, "sample-c": cmd_sample_c, "simulate": cmd_simulate,
    "assemble": cmd_assemble, "synth-data": cmd_synth_data, "recon-h": cmd_recon_h,
    "recon-sigma": cmd_recon_sigma, "ensemble": cmd_ensemble, "mu-sweep": cmd_mu_sweep,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aetlab", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file")
    common.add_argument("--out", help="output directory (overrides run.output)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--threads", type=int, help="worker processes for ensembles")
    common.add_argument("--seed", type=int, help="master seed for all random draws")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).strip())
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        if args.seed is not None:
            cfg = with_seed(cfg, args.seed)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            cfg.threads = args.threads
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else cfg.output
    run = Run(args.command, cfg, out)
    try:
        ok = COMMANDS[args.command](run)
        manifest = run.finish()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PipelineError, fileio.FormatError, OSError, ValueError, RuntimeError,
            np.linalg.LinAlgError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    print(json.dumps({"command": args.command, "manifest": str(manifest),
                      "scalars": run.scalars and {k: _jsonable(v) for k, v in run.scalars.items()}},
                     sort_keys=True))
    if args.command == "verify" and not ok:
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
