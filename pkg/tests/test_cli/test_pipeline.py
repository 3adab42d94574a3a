"""
Tests for the distreg-quantlet command line.
"""
import json

import pandas as pd
import pytest
from click.testing import CliRunner

from distreg.data.artifacts import ERROR_REPORT, LOCK_FILE
from distreg.main import cli
from distreg.services.report import BAND_COLUMNS


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, tiny_config, *args):
    return runner.invoke(cli, [args[0], "--config", str(tiny_config), *args[1:]])


def run_dir(tiny_config):
    return tiny_config.parent / "run"


def test_help(runner):
    """Test every subcommand is registered."""
    result = runner.invoke(cli, ["--help"])
    assert result.exit_code == 0
    for name in ("preprocess", "basis", "fit", "infer", "simulate", "evaluate", "report", "all"):
        assert name in result.output


def test_infer_without_fit(runner, tiny_config):
    """Test a missing upstream artifact exits with code 2 and an error report."""
    result = invoke(runner, tiny_config, "infer")
    assert result.exit_code == 2

    report = json.loads((run_dir(tiny_config) / ERROR_REPORT).read_text())
    assert report["error"] == "DependencyMissingError"
    assert report["artifact"].startswith("qfr_")
    assert not (run_dir(tiny_config) / LOCK_FILE).exists()


def test_preprocess_without_input(runner, tiny_config):
    """Test preprocessing without an input CSV or simulated corpus exits with code 2."""
    result = invoke(runner, tiny_config, "preprocess")
    assert result.exit_code == 2


def test_invalid_config(runner, tiny_config, tmp_path):
    """Test configuration errors exit with code 3."""
    assert invoke(runner, tiny_config, "fit", "--set", "model.mcmc.keep=0").exit_code == 3
    assert invoke(runner, tiny_config, "fit", "--set", "model.no_such_key=1").exit_code == 3

    broken = tmp_path / "broken.toml"
    broken.write_text("[model\n")
    assert runner.invoke(cli, ["fit", "--config", str(broken)]).exit_code == 3


def test_locked_output(runner, tiny_config):
    """Test a held lock file refuses to run without touching the directory."""
    out = run_dir(tiny_config)
    out.mkdir(parents=True)
    (out / LOCK_FILE).write_text("12345")

    result = invoke(runner, tiny_config, "simulate")
    assert result.exit_code == 1
    assert not (out / ERROR_REPORT).exists()
    assert not (out / "simulated_epochs.csv").exists()


def test_simulate_writes_corpus(runner, tiny_config):
    """Test the simulated corpus uses the epoch CSV schema."""
    result = invoke(runner, tiny_config, "simulate")
    assert result.exit_code == 0, result.output

    out = run_dir(tiny_config)
    frame = pd.read_csv(out / "simulated_epochs.csv", nrows=5)
    assert list(frame.columns) == ["subject_id", "day", "epoch", "count", "sex", "site", "age", "bmi"]
    manifest = json.loads((out / "manifest_simulate.json").read_text())
    assert "simulated_epochs.csv" in {e["path"] for e in manifest["outputs"]}


@pytest.mark.slow
def test_full_pipeline(runner, tiny_config):
    """Test simulate then all produces every artifact, reruns reproducibly and honours overrides."""
    out = run_dir(tiny_config)
    assert invoke(runner, tiny_config, "simulate").exit_code == 0
    result = invoke(runner, tiny_config, "all")
    assert result.exit_code == 0, result.output

    for name in (
        "quantiles_boxcox.csv", "quantiles.json", "covariates.csv", "exclusions.csv",
        "missingness_profiles.csv", "fpca_basis.json", "quantlet_basis.csv", "quantlet_coefficients.csv",
        "qfr_beta.csv", "qfr_draws.json", "missreg_beta.csv", "summaries.csv", "quantile_bands.csv",
        "residual_covariance.csv", "evaluation_ise_summary.csv", "report_contrast_age.csv",
        "report_contrast_slices.csv", "report_whatif_quantiles.csv", "report_whatif_densities.csv",
        "report_ise.csv", "report_bias.csv",
    ):
        assert (out / name).is_file(), name
    for stage in ("preprocess", "basis", "fit", "infer", "evaluate", "report"):
        assert (out / f"manifest_{stage}.json").is_file()
    assert not (out / ERROR_REPORT).exists()

    quantiles = pd.read_csv(out / "quantiles_boxcox.csv")
    assert quantiles.shape[1] == 1 + 64
    bands = pd.read_csv(out / "quantile_bands.csv")
    assert (bands["estimate"].diff().dropna() >= -1e-8).all()
    assert (bands["lower"] <= bands["upper"]).all()
    summaries = pd.read_csv(out / "summaries.csv").set_index("functional")
    total = summaries.loc["mvpa_prop", "mean"] + summaries.loc["p_delta_1148", "mean"]
    assert total == pytest.approx(1.0)
    whatif = pd.read_csv(out / "report_whatif_quantiles.csv")
    assert whatif["pattern"].iloc[0] == "none"

    beta = (out / "qfr_beta.csv").read_bytes()
    summary_bytes = (out / "summaries.csv").read_bytes()
    assert invoke(runner, tiny_config, "fit").exit_code == 0
    assert invoke(runner, tiny_config, "infer").exit_code == 0
    assert (out / "qfr_beta.csv").read_bytes() == beta
    assert (out / "summaries.csv").read_bytes() == summary_bytes

    result = invoke(runner, tiny_config, "report", "--set", "inference.contrasts=false")
    assert result.exit_code == 0, result.output
    contrasts = pd.read_csv(out / "report_contrast_age.csv")
    assert contrasts.empty
    assert list(contrasts.columns) == ["age", "p", *BAND_COLUMNS]
