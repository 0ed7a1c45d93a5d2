from pathlib import Path

import pytest

from aetlab.config import ConfigError, canonical, load_config, parse_overrides, with_seed


def test_defaults():
    cfg = load_config(text="")
    assert cfg.setup.target_nodes == 1500 and cfg.setup.grid_n == 160
    assert cfg.ensemble_n == 30 and cfg.sweep_mu == (0.0, 0.01, 0.05, 0.10)
    assert cfg.setup.log_beta_bounds == (-8.0, 2.0)
    assert cfg.criteria == tuple(range(1, 10))


def test_full_preset():
    cfg = load_config(text="[run]\npreset = full\n")
    assert cfg.setup.target_nodes == 20100 and cfg.setup.n_sources == 36


def test_values_and_relative_paths(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[mesh]\ntarget_nodes = 800\n[wave]\nT = auto\nn_sources = 4\n"
                 "[sampler]\nshared_phases = no\nmu = 0.02\n"
                 "[sigma]\ngamma_tv = 2e-3\n[tikhonov]\nlog_beta_min = -10\n"
                 "[ensemble]\ncorr_sources = 0, 2\n[run]\noutput = results\n")
    cfg = load_config(p)
    assert cfg.setup.target_nodes == 800 and cfg.setup.T is None
    assert cfg.setup.sampler.shared_phases is False and cfg.ensemble_mu == 0.02
    assert cfg.sigma.gamma_tv == 2e-3
    assert cfg.setup.log_beta_bounds == (-10.0, 2.0)
    assert cfg.corr_sources == (0, 2)
    assert cfg.output == tmp_path.resolve() / "results"


def test_unknown_key_line_number():
    with pytest.raises(ConfigError, match=r"<config>:4: unknown key 'grid_size'"):
        load_config(text="[mesh]\ntarget_nodes = 10\n[wave]\ngrid_size = 5\n")


def test_unknown_section_line_number():
    with pytest.raises(ConfigError, match=r":3: unknown section \[solver\]"):
        load_config(text="# comment\n\n[solver]\nx = 1\n")


def test_bad_value_line_number():
    with pytest.raises(ConfigError, match=r":2: bad value for wave.grid_n"):
        load_config(text="[wave]\ngrid_n = many\n")


def test_syntax_error():
    with pytest.raises(ConfigError, match=r":1:"):
        load_config(text="grid_n = 3\n")


def test_semantic_errors():
    with pytest.raises(ConfigError):
        load_config(text="[tikhonov]\nlog_beta_min = 3\n")
    with pytest.raises(ConfigError):
        load_config(text="[run]\npreset = huge\n")
    with pytest.raises(ConfigError):
        load_config(text="[sampler]\ngamma_cut = 2\n")
    with pytest.raises(ConfigError):
        load_config(text="[sigma]\nsigma_min = 5\nsigma_max = 1\n")


def test_no_interpolation():
    cfg = load_config(text="[run]\noutput = $HOME/%(x)s\n")
    assert str(cfg.output).endswith("$HOME/%(x)s")


def test_overrides():
    cfg = load_config(text="[wave]\ngrid_n = 100\n", overrides=["wave.grid_n=120",
                                                              "sweep.mu_values=0 0.1"])
    assert cfg.setup.grid_n == 120 and cfg.sweep_mu == (0.0, 0.1)
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(text="", overrides=["wave.nope=1"])
    with pytest.raises(ConfigError):
        parse_overrides(["grid_n=3"])


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config(Path("/nonexistent/run.ini"))


def test_seed_and_canonical():
    cfg = load_config(text="")
    other = with_seed(cfg, 9)
    assert other.setup.sampler.seed == 9 and other.master_seed == 9 and other.sweep_seed == 9
    assert canonical(cfg) == canonical(load_config(text=""))
    assert canonical(cfg) != canonical(other)
