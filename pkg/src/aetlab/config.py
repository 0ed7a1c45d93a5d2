"""Experiment configuration from sectioned ``key = value`` files.

Unknown sections or keys are rejected with the offending line number.
Interpolation and environment expansion are disabled; relative paths are
resolved against the directory of the config file.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .pipeline import Setup
from .recon_sigma import SigmaReconParams
from .sampler import SamplerParams


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple:
    return tuple(float(v) for v in s.replace(",", " ").split())


def _ints(s: str) -> tuple:
    return tuple(int(v) for v in s.replace(",", " ").split())


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


# section -> key -> (target, attribute, parser)
_SETUP = {
    "mesh": {"radius": float, "target_nodes": int},
    "wave": {"grid_n": int, "half_width": float, "inner_half_width": float,
             "n_sources": int, "points_per_source": int, "arc_degrees": float,
             "frequency": float, "amplitude": float, "n_records": int,
             "T": _opt_float, "damping": float},
    "physics": {"eta": float, "sigma_background": float, "sigma_contrast": float,
                "c_bg": float, "c_incl": float, "mu_max": float},
}
_SAMPLER = {"f0": float, "ell": float, "c0": float, "c1": float, "N": int,
            "beta0": float, "beta1": float, "gamma_cut": float,
            "u_radius_ratio": float, "mu": float, "seed": int,
            "shared_phases": _bool, "smoothing": float}
_TIKHONOV = {"log_beta_min": float, "log_beta_max": float, "factor": float}
_SIGMA = {"gamma_tv": float, "tau": float, "eps_shift": float, "outer_iters": int,
          "cg_tol": float, "cg_max_iters": int, "sigma_min": float,
          "sigma_max": float, "sigma_init": float, "armijo": float,
          "max_halvings": int, "update_tol": float}
_ENSEMBLE = {"n": int, "master_seed": int, "mu": float, "corr_sources": _ints}
_SWEEP = {"mu_values": _floats, "seed": int, "current": int}
_RUN = {"preset": str, "output": str, "threads": int}
_VERIFY = {"criteria": _ints}

SCHEMA = {**_SETUP, "sampler": _SAMPLER, "tikhonov": _TIKHONOV, "sigma": _SIGMA,
          "ensemble": _ENSEMBLE, "sweep": _SWEEP, "run": _RUN, "verify": _VERIFY}


@dataclass
class ExperimentConfig:
    setup: Setup
    sigma: SigmaReconParams
    ensemble_n: int = 30
    master_seed: int = 0
    ensemble_mu: float = 0.05
    corr_sources: tuple = (0, 1, 2, 3)
    sweep_mu: tuple = (0.0, 0.01, 0.05, 0.10)
    sweep_seed: int = 0
    sweep_current: int = 0
    output: Path = Path("out")
    threads: int = 1
    criteria: tuple = tuple(range(1, 10))
    base_dir: Path = Path(".")
    source_text: str = ""
    values: dict = field(default_factory=dict)


def _key_lines(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    out, section = {}, None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out.setdefault((section, None), n)
        elif section is not None:
            for sep in ("=", ":"):
                if sep in line:
                    out.setdefault((section, line.split(sep, 1)[0].strip().lower()), n)
                    break
    return out


def _parse_value(section, key, raw, where):
    try:
        return SCHEMA[section][key](raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: bad value for {section}.{key}: {exc}") from None


def parse_overrides(items) -> list[tuple[str, str, str]]:
    out = []
    for item in items or []:
        key, sep, val = item.partition("=")
        sec, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set {item!r}: expected section.key=value")
        out.append((sec.strip(), name.strip().lower(), val.strip()))
    return out


def load_config(path=None, overrides=(), *, text: str | None = None) -> ExperimentConfig:
    """Read a config file (or ``text``) and apply ``section.key=value`` overrides."""
    if text is None and path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        text = p.read_text()
        label, base = str(p), p.resolve().parent
    else:
        text = text or ""
        label, base = "<config>", Path(".").resolve()
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=label)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        msg = getattr(exc, "message", str(exc)).splitlines()[0]
        raise ConfigError(f"{label}:{line or '?'}: {msg}") from None
    lines = _key_lines(text)
    lower_schema = {s: {k.lower(): k for k in keys} for s, keys in SCHEMA.items()}
    values: dict = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{label}:{lines.get((sec, None), '?')}: unknown section [{sec}]")
        for key, raw in cp.items(sec):
            where = f"{label}:{lines.get((sec, key), '?')}"
            if key not in lower_schema[sec]:
                raise ConfigError(f"{where}: unknown key '{key}' in [{sec}]")
            name = lower_schema[sec][key]
            values[(sec, name)] = _parse_value(sec, name, raw, where)
    for sec, key, raw in parse_overrides(overrides):
        if sec not in SCHEMA or key not in lower_schema[sec]:
            raise ConfigError(f"--set {sec}.{key}: unknown key")
        name = lower_schema[sec][key]
        values[(sec, name)] = _parse_value(sec, name, raw, f"--set {sec}.{key}")
    try:
        cfg = build(values, base)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{label}: {exc}") from None
    cfg.source_text = text
    return cfg


def build(values: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    preset = values.get(("run", "preset"), "desk")
    if preset not in ("desk", "full"):
        raise ConfigError(f"run.preset must be 'desk' or 'full', got {preset!r}")
    setup_kw = {name: values[(sec, name)] for sec in _SETUP for name in _SETUP[sec]
                if (sec, name) in values}
    lo = values.get(("tikhonov", "log_beta_min"), -8.0)
    hi = values.get(("tikhonov", "log_beta_max"), 2.0)
    if not lo < hi:
        raise ConfigError("tikhonov: need log_beta_min < log_beta_max")
    setup_kw["log_beta_bounds"] = (lo, hi)
    setup_kw["beta_factor"] = values.get(("tikhonov", "factor"), 1.1)
    if setup_kw["beta_factor"] <= 1:
        raise ConfigError("tikhonov.factor must exceed 1")
    sampler = SamplerParams(**{k: values[("sampler", k)] for k in _SAMPLER
                               if ("sampler", k) in values})
    setup_kw["sampler"] = sampler
    setup = Setup.desk(**setup_kw) if preset == "desk" else Setup(**setup_kw)
    sigma = SigmaReconParams(**{k: values[("sigma", k)] for k in _SIGMA
                                if ("sigma", k) in values})
    out = Path(values.get(("run", "output"), "out"))
    cfg = ExperimentConfig(
        setup=setup, sigma=sigma,
        ensemble_n=values.get(("ensemble", "n"), 30),
        master_seed=values.get(("ensemble", "master_seed"), sampler.seed),
        ensemble_mu=values.get(("ensemble", "mu"), sampler.mu),
        corr_sources=values.get(("ensemble", "corr_sources"), (0, 1, 2, 3)),
        sweep_mu=values.get(("sweep", "mu_values"), (0.0, 0.01, 0.05, 0.10)),
        sweep_seed=values.get(("sweep", "seed"), sampler.seed),
        sweep_current=values.get(("sweep", "current"), 0),
        output=out if out.is_absolute() else base_dir / out,
        threads=values.get(("run", "threads"), 1),
        criteria=values.get(("verify", "criteria"), tuple(range(1, 10))),
        base_dir=base_dir, values=dict(values))
    if cfg.ensemble_n < 1 or cfg.threads < 1:
        raise ConfigError("ensemble.n and run.threads must be positive")
    return cfg


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Override every seed of the experiment."""
    setup = replace(cfg.setup, sampler=replace(cfg.setup.sampler, seed=seed))
    return replace(cfg, setup=setup, master_seed=seed, sweep_seed=seed)


def canonical(cfg: ExperimentConfig) -> str:
    """Deterministic text form of the resolved settings (for manifests)."""
    s = cfg.setup
    parts = [f"{f.name}={getattr(s, f.name)!r}" for f in fields(s)]
    parts += [f"sigma.{f.name}={getattr(cfg.sigma, f.name)!r}" for f in fields(cfg.sigma)]
    parts += [f"ensemble=({cfg.ensemble_n},{cfg.master_seed},{cfg.ensemble_mu},{cfg.corr_sources})",
              f"sweep=({cfg.sweep_mu},{cfg.sweep_seed},{cfg.sweep_current})"]
    return "\n".join(parts)
