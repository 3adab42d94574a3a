"""
Pytest configuration and fixtures.
"""
import numpy as np
import pandas as pd
import pytest
from scipy.stats import norm

from distreg.config import GeneratorSettings, ScenarioSettings
from distreg.models.epoch import CohortTable, EpochSeries, Sex, SubjectRecord
from distreg.services import simgen
from distreg.utils.grid import EPOCHS_PER_DAY, quantile_grid

TINY_CONFIG = """
log_level = "WARNING"
seed = 7

[paths]
output_dir = "{output_dir}"

[preprocessing]
n_grid = 64

[fpca]
k_override = 2

[basis]
k_override = 4
evaluate_loo = false

[model]
n_knots = 3

[model.mcmc]
burn_in = 20
keep = 40

[inference]
n_isplines = 8
covariance_grid = 16
contrast_grid = 8
age_step = 2.0
bmi_step = 25.0

[simulation]
preset = "custom"
replicates = 2
truth_subject_days = 60
k_q = 4
k_m = 2

[simulation.generator]
ages = [12, 14, 16]
subjects_per_cell = 3
days_per_subject = 3

[simulation.mcmc]
burn_in = 10
keep = 20
"""


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(12345)


def make_day(subject_id: str, day: int, counts: np.ndarray) -> EpochSeries:
    return EpochSeries(
        subject_id=subject_id,
        day_index=day,
        counts=np.asarray(counts, dtype=np.int64),
        missing_mask=np.zeros(EPOCHS_PER_DAY, dtype=bool),
    )


@pytest.fixture
def make_subject(rng):
    """Factory for subjects with Poisson-like daily counts."""
    def factory(subject_id="S1", sex=Sex.FEMALE, site=1, age=14.0, bmi=50.0, n_days=3, mean=200.0):
        days = tuple(
            make_day(subject_id, d, rng.poisson(mean, EPOCHS_PER_DAY))
            for d in range(1, n_days + 1)
        )
        return SubjectRecord(subject_id=subject_id, sex=sex, site=site, age=age, bmi=bmi, days=days)
    return factory


@pytest.fixture
def small_generator():
    """Generator settings for a cohort small enough for unit tests."""
    return GeneratorSettings(ages=[12, 14, 16], subjects_per_cell=4, days_per_subject=3)


@pytest.fixture
def small_cohort(small_generator):
    """Complete synthetic cohort (24 subjects, 3 days each)."""
    return simgen.generate_cohort(small_generator, seed=99)


@pytest.fixture
def masked_cohort(small_cohort):
    """Synthetic cohort with bedtime non-wear labelled, before filtering."""
    return simgen.impose_missingness(small_cohort, ScenarioSettings(case="bedtime"), seed=99)


@pytest.fixture
def gaussian_quantiles(rng):
    """Quantile matrix whose rows are exactly mu + sigma * Phi^-1(p)."""
    grid = quantile_grid(256)
    mu = rng.normal(2.0, 0.5, 12)
    sigma = rng.uniform(0.5, 1.5, 12)
    return mu[:, None] + sigma[:, None] * norm.ppf(grid)[None, :]


@pytest.fixture
def skewed_quantiles(rng):
    """Monotone non-Gaussian quantile matrix (gamma-like shapes)."""
    grid = quantile_grid(256)
    shape = rng.uniform(1.0, 4.0, 15)
    scale = rng.uniform(0.5, 2.0, 15)
    base = np.vstack([np.sqrt(-np.log1p(-grid)) ** (1.0 / s) for s in shape])
    return scale[:, None] * base + rng.normal(0.0, 0.2, 15)[:, None]


@pytest.fixture
def covariates(rng):
    """Covariate table for 40 subjects balanced over the four cells."""
    n = 40
    return pd.DataFrame({
        "subject_id": [f"S{i:03d}" for i in range(n)],
        "sex": ["F", "F", "M", "M"] * (n // 4),
        "site": [1, 2, 1, 2] * (n // 4),
        "age": rng.choice([12.0, 13.0, 14.0, 15.0, 16.0], n),
        "bmi": np.round(rng.uniform(5.0, 95.0, n), 1),
    })


@pytest.fixture
def tiny_config(tmp_path):
    """TOML config for a fast end-to-end run in a temporary directory."""
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_CONFIG.format(output_dir=(tmp_path / "run").as_posix()))
    return path


@pytest.fixture
def cohort_factory(make_subject):
    """Build a CohortTable from a list of subject keyword dicts."""
    def factory(specs):
        return CohortTable(subjects=[make_subject(**spec) for spec in specs])
    return factory
