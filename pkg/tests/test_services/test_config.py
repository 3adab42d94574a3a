"""
Tests for run configuration loading.
"""
from pathlib import Path

import pytest

from distreg.config import Settings, deep_merge, load_settings, parse_override
from distreg.exceptions import ConfigError


def test_defaults():
    """Test defaults match the documented constants."""
    settings = load_settings()
    assert settings.preprocessing.n_grid == 1024
    assert settings.preprocessing.nonwear_min_run == 60
    assert settings.preprocessing.min_wear_epochs == 960
    assert settings.preprocessing.lambda_grid_size == 199
    assert settings.basis.ccc_min == 0.99
    assert settings.inference.reference_x == [0.25, 0.25, 0.25, 0.25, 14.0, 50.0]


def test_parse_override():
    """Test dotted keys nest and values are read as TOML literals."""
    assert parse_override("model.mcmc.keep=500") == {"model": {"mcmc": {"keep": 500}}}
    assert parse_override("inference.contrasts=false") == {"inference": {"contrasts": False}}
    assert parse_override("inference.thresholds=[100, 200]") == {"inference": {"thresholds": [100, 200]}}
    assert parse_override("log_level=DEBUG") == {"log_level": "DEBUG"}
    with pytest.raises(ConfigError):
        parse_override("no-equals-sign")
    with pytest.raises(ConfigError):
        parse_override("=3")


def test_deep_merge():
    """Test nested dictionaries merge without mutating the base."""
    base = {"a": {"b": 1, "c": 2}}
    merged = deep_merge(base, {"a": {"c": 3}})
    assert merged == {"a": {"b": 1, "c": 3}}
    assert base == {"a": {"b": 1, "c": 2}}


def test_file_and_override_priority(tiny_config):
    """Test overrides win over the TOML file, which wins over defaults."""
    settings = load_settings(tiny_config, ["model.mcmc.keep=11"])
    assert isinstance(settings, Settings)
    assert settings.model.mcmc.keep == 11
    assert settings.model.mcmc.burn_in == 20
    assert settings.preprocessing.n_grid == 64
    assert settings.paths.output_dir == Path(tiny_config).parent / "run"


def test_environment(monkeypatch):
    """Test DISTREG_ variables with __ nesting are read."""
    monkeypatch.setenv("DISTREG_SEED", "42")
    monkeypatch.setenv("DISTREG_MODEL__MCMC__KEEP", "7")
    settings = load_settings()
    assert settings.seed == 42
    assert settings.model.mcmc.keep == 7


def test_simulation_presets():
    """Test presets fill unspecified simulation fields."""
    desk = load_settings()
    assert desk.simulation.replicates == 20
    assert desk.simulation.generator.subjects_per_cell == 40

    paper = load_settings(overrides=["simulation.preset=\"paper-scale\""])
    assert paper.simulation.replicates == 100
    assert paper.simulation.k_m == 11
    assert paper.simulation.mcmc.keep == 2000

    custom = load_settings(overrides=["simulation.preset=\"paper-scale\"", "simulation.replicates=3"])
    assert custom.simulation.replicates == 3


def test_invalid_values():
    """Test failed validation raises ConfigError."""
    with pytest.raises(ConfigError):
        load_settings(overrides=["model.mcmc.keep=0"])
    with pytest.raises(ConfigError):
        load_settings(overrides=["model.unknown_key=1"])
    with pytest.raises(ConfigError):
        load_settings(overrides=["simulation.scenario.bedtime_bounds_minutes=[10.0, 5.0]"])


def test_bad_files(tmp_path):
    """Test missing and malformed config files raise ConfigError."""
    with pytest.raises(ConfigError):
        load_settings(tmp_path / "missing.toml")
    broken = tmp_path / "broken.toml"
    broken.write_text("[model\nn_knots = ")
    with pytest.raises(ConfigError):
        load_settings(broken)
