"""
Tests for the synthetic cohort generator and missingness scenarios.
"""
import numpy as np
import pytest

from distreg.config import GeneratorSettings, ScenarioSettings
from distreg.exceptions import NoValidSubjectsError
from distreg.models.epoch import CohortTable, Sex
from distreg.models.quantile import BoxCoxTransform, QuantileScale
from distreg.services import distq, ingest, simgen
from distreg.utils.grid import EPOCHS_PER_DAY, N_BINS


def test_keyed_seeds_are_stable():
    """Test keyed streams depend only on seed and keys."""
    assert simgen.key_int(7) == 7
    assert simgen.key_int("subject") == simgen.key_int("subject")
    assert simgen.derive_seed(1, "a", 2) == simgen.derive_seed(1, "a", 2)
    assert simgen.derive_seed(1, "a", 2) != simgen.derive_seed(1, "a", 3)
    np.testing.assert_array_equal(
        simgen.keyed_rng(5, "x").normal(size=4), simgen.keyed_rng(5, "x").normal(size=4)
    )


def test_generate_cohort_layout(small_cohort, small_generator):
    """Test one subject per cell slot with complete days."""
    assert len(small_cohort) == 3 * 2 * small_generator.subjects_per_cell
    assert small_cohort.n_days == len(small_cohort) * small_generator.days_per_subject
    frame = small_cohort.covariate_frame()
    assert set(frame["age"]) == {12.0, 14.0, 16.0}
    assert set(frame["sex"]) == {"F", "M"}
    assert frame["bmi"].between(0.0, 100.0).all()
    assert all(not day.missing_mask.any() for s in small_cohort for day in s.days)


def test_generate_cohort_deterministic(small_generator, small_cohort):
    """Test identical seeds give identical cohorts and different seeds do not."""
    again = simgen.generate_cohort(small_generator, seed=99)
    other = simgen.generate_cohort(small_generator, seed=100)
    first = small_cohort.subjects[0].days[0].counts
    np.testing.assert_array_equal(again.subjects[0].days[0].counts, first)
    assert not np.array_equal(other.subjects[0].days[0].counts, first)


def test_generate_cohort_independent_of_cell_list():
    """Test a subject's data does not depend on which other cells are generated."""
    wide = simgen.generate_cohort(GeneratorSettings(ages=[12, 14], subjects_per_cell=1, days_per_subject=2), 3)
    narrow = simgen.generate_cohort(GeneratorSettings(ages=[12], subjects_per_cell=1, days_per_subject=2), 3)
    np.testing.assert_array_equal(
        wide.by_id()["F12-0001"].days[1].counts, narrow.by_id()["F12-0001"].days[1].counts
    )


def test_mean_curve_effects():
    """Test the age and sex effects shift the mean curve."""
    gen = GeneratorSettings()
    base = simgen.mean_curve(gen, 12, Sex.FEMALE)
    assert base.shape == (EPOCHS_PER_DAY,)
    np.testing.assert_allclose(simgen.mean_curve(gen, 12, Sex.MALE) - base, gen.male_effect)
    np.testing.assert_allclose(simgen.mean_curve(gen, 16, Sex.FEMALE) - base, 4 * gen.age_effect)


@pytest.mark.parametrize("case", ["bedtime", "bedtime_plus_daytime"])
def test_sample_day_segments(case):
    """Test sampled segments are long enough to be labelled and lie in the window."""
    scenario = ScenarioSettings(case=case, trigger_female=1.0)
    rng = np.random.default_rng(4)
    for _ in range(200):
        for start, stop, kind in simgen.sample_day_segments(scenario, 14.0, Sex.FEMALE, rng):
            assert stop - start >= ingest.NONWEAR_MIN_RUN
            assert 0 <= start < stop <= EPOCHS_PER_DAY
            assert kind in {"morning", "night", "daytime"}


def test_no_missingness_case():
    """Test the complete-data scenario samples no segments."""
    rng = np.random.default_rng(1)
    assert simgen.sample_day_segments(ScenarioSettings(case="none"), 14.0, Sex.MALE, rng) == []


def test_impose_missingness(masked_cohort, small_cohort):
    """Test masked epochs are zero and no subject is dropped."""
    assert masked_cohort.subject_ids == small_cohort.subject_ids
    masked = sum(int(day.missing_mask.sum()) for s in masked_cohort for day in s.days)
    assert masked > 0
    for subject in masked_cohort:
        for day in subject.days:
            assert np.all(day.counts[day.missing_mask] == 0)


def test_impose_missingness_order_independent(small_cohort, masked_cohort):
    """Test each subject-day's segments do not depend on subject order."""
    reversed_cohort = CohortTable(subjects=list(reversed(small_cohort.subjects)))
    again = simgen.impose_missingness(reversed_cohort, ScenarioSettings(case="bedtime"), seed=99).by_id()
    for subject in masked_cohort:
        for a, b in zip(subject.days, again[subject.subject_id].days):
            np.testing.assert_array_equal(a.missing_mask, b.missing_mask)


def test_apply_missingness_filters(small_cohort):
    """Test filtering follows imposing the scenario."""
    kept = simgen.apply_missingness(small_cohort, ScenarioSettings(case="bedtime"), seed=99)
    assert len(kept) > 0
    with pytest.raises(NoValidSubjectsError):
        simgen.apply_missingness(small_cohort, ScenarioSettings(case="bedtime"), seed=99,
                                 min_wear_epochs=EPOCHS_PER_DAY)


def test_true_frechet_mean(small_generator):
    """Test the Monte Carlo truth is a monotone Box-Cox quantile with standard errors."""
    transform = BoxCoxTransform(lam=-2.0 / 99.0)
    q, se = simgen.true_frechet_mean(small_generator, 14, Sex.MALE, transform, n_subject_days=30, seed=2, n=64)
    assert q.scale is QuantileScale.BOXCOX
    assert q.is_monotone()
    assert se.shape == (64,)
    assert np.all(se >= 0)


def test_ise_is_wasserstein(gaussian_quantiles):
    """Test ISE equals the squared 2-Wasserstein distance."""
    from distreg.models.quantile import QuantileFunction

    a = QuantileFunction(gaussian_quantiles[0], QuantileScale.BOXCOX)
    b = QuantileFunction(gaussian_quantiles[1], QuantileScale.BOXCOX)
    assert simgen.ise(a, b) == pytest.approx(distq.wasserstein2(a, b))


def test_bin_summary(masked_cohort):
    """Test heat map rows cover every bin per age and sex."""
    summary = simgen.bin_summary(masked_cohort)
    assert len(summary) == 3 * 2 * N_BINS
    assert summary["missing_rate"].between(0.0, 1.0).all()
    assert summary.groupby(["age", "sex"])["bin"].nunique().eq(N_BINS).all()
