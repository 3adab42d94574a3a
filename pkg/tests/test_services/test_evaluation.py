"""
Tests for the simulation evaluation harness.
"""
import numpy as np
import pandas as pd
import pytest

from distreg.config import load_settings
from distreg.models.epoch import Sex
from distreg.models.quantile import BoxCoxTransform, QuantileFunction, QuantileScale
from distreg.services import evaluation, qfr
from distreg.utils.grid import quantile_grid


def test_cell_vector():
    """Test cell vectors average both sites of one sex."""
    vector = evaluation.cell_vector(Sex.MALE, 13.0, 50.0)
    np.testing.assert_array_equal(vector, [0.0, 0.0, 0.5, 0.5, 13.0, 50.0])


def test_flam_values_and_interpolation():
    """Test the 13-point read-off and its monotone interpolation back to the grid."""
    grid = quantile_grid(1024)
    q_matrix = np.vstack([grid, 2.0 * grid])
    q13 = evaluation.flam_values(q_matrix)

    assert q13.shape == (2, 13)
    np.testing.assert_allclose(q13[0], evaluation.FLAM_PROBS, atol=1e-12)
    back = evaluation.interpolate_to_grid(q13[1], 1024)
    np.testing.assert_allclose(back, 2.0 * grid, atol=1e-10)


def test_independent_baseline_flat_signal(covariates, rng):
    """Test quantile values shared by every subject give flat per-level predictions."""
    settings = load_settings(overrides=["simulation.mcmc.burn_in=50", "simulation.mcmc.keep=200"])
    design = qfr.build_design(covariates, np.zeros((len(covariates), 0)), n_knots=3).without_random_effects()
    q13 = np.tile(1.5 + rng.normal(0.0, 0.01, (len(covariates), 1)), (1, 13))

    draws = evaluation.independent_quantile_baseline(q13, design, settings, seed=5)
    predicted = qfr.predict_coefficients(draws, [0.25, 0.25, 0.25, 0.25, 14.0, 50.0], mapper=design.mapper)

    assert predicted.shape == (200, 13)
    np.testing.assert_allclose(predicted.mean(axis=0), 1.5, atol=0.02)


def test_mean_bias_eval():
    """Test bias rows subtract the true mean per cell."""
    transform = BoxCoxTransform(lam=0.0)
    truth = evaluation.GroundTruth(
        transform=transform,
        quantiles={(12, "F"): QuantileFunction(np.full(32, 2.0), QuantileScale.BOXCOX)},
        mc_se={(12, "F"): np.full(32, 0.1)},
    )
    table = evaluation.mean_bias_eval({"gam_adjusted": {(12, "F"): 2.5}}, truth, replicate=0)
    assert table.loc[0, "bias"] == pytest.approx(0.5)
    assert truth.mean_se_bound((12, "F")) == pytest.approx(0.1)

    summary = evaluation.bias_summary(table, truth)
    assert list(summary.columns) == ["age", "sex", "method", "bias", "replicate_se", "truth_se_bound"]
    assert summary.loc[0, "replicate_se"] == 0.0


def test_ise_summary():
    """Test median and mean ISE per method and cell."""
    table = pd.DataFrame({
        "replicate": [0, 1, 2],
        "age": [12, 12, 12],
        "sex": ["F", "F", "F"],
        "method": ["qfr_adjusted"] * 3,
        "ise": [1.0, 2.0, 6.0],
    })
    summary = evaluation.ise_summary(table)
    assert summary.loc[0, "median"] == 2.0
    assert summary.loc[0, "mean"] == 3.0


@pytest.mark.slow
def test_run_evaluation_small(tiny_config):
    """Test one small replicate scores every method in every cell."""
    settings = load_settings(tiny_config, ["simulation.replicates=1"])
    ise_table, bias_table, truth = evaluation.run_evaluation(settings)

    cells = {(age, sex) for age in (12, 14, 16) for sex in ("F", "M")}
    assert set(truth.quantiles) == cells
    assert set(ise_table["method"]) == {"qfr_adjusted", "qfr_unadjusted", "flam_adjusted", "flam_unadjusted"}
    assert set(bias_table["method"]) == {"qfr_adjusted", "qfr_unadjusted", "gam_adjusted", "gam_unadjusted"}
    assert len(ise_table) == 4 * len(cells)
    assert np.all(ise_table["ise"] >= 0)
    assert np.all(np.isfinite(bias_table["bias"]))


@pytest.mark.slow
def test_adjustment_orderings(tiny_config):
    """Test adjusted fits beat unadjusted ones under day-time plus bedtime non-wear."""
    settings = load_settings(tiny_config, [
        "simulation.replicates=4",
        "simulation.truth_subject_days=2000",
        "simulation.scenario.case=bedtime_plus_daytime",
        "simulation.generator.subjects_per_cell=12",
        "simulation.mcmc.burn_in=50",
        "simulation.mcmc.keep=100",
    ])
    ise_table, bias_table, _ = evaluation.run_evaluation(settings)

    median_ise = ise_table.groupby("method")["ise"].median()
    assert median_ise["qfr_adjusted"] < median_ise["qfr_unadjusted"]
    assert median_ise["qfr_adjusted"] <= median_ise["flam_adjusted"]

    abs_bias = bias_table.groupby(["method", "age", "sex"])["bias"].mean().abs().groupby("method").mean()
    assert abs_bias["qfr_adjusted"] < abs_bias["qfr_unadjusted"]
