"""
Synthetic cohorts with known ground truth.

Activity on the log(count + 1) scale is a diurnal mean curve per age and sex
plus a subject intercept and AR(1) epoch noise. Missingness scenarios zero
out bedtime segments (and optionally a daytime block) before the 30-minute
rule and the validity filters are applied.
"""
import hashlib
import logging
from dataclasses import replace
from typing import List, Tuple

import numpy as np
import pandas as pd
from scipy.signal import lfilter
from scipy.stats import truncnorm
from tqdm import tqdm

from distreg.config import GeneratorSettings, ScenarioSettings
from distreg.models.epoch import CohortTable, EpochSeries, Sex, SubjectRecord
from distreg.models.quantile import BoxCoxTransform, QuantileFunction, QuantileScale
from distreg.services import distq, ingest
from distreg.utils.grid import EPOCHS_PER_BIN, EPOCHS_PER_DAY, EPOCHS_PER_HOUR, N_BINS, N_GRID, epoch_hours

logger = logging.getLogger(__name__)

MIN_ZEROED_RUN = ingest.NONWEAR_MIN_RUN
EPOCHS_PER_MINUTE = 2


def key_int(key) -> int:
    """Stable 32-bit integer for a seed key (ints pass through)."""
    if isinstance(key, (int, np.integer)):
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def keyed_rng(seed: int, *keys) -> np.random.Generator:
    """Generator that depends only on the seed and the keys, not on call order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(key_int(k) for k in keys)]))


def derive_seed(seed: int, *keys) -> int:
    """Integer seed derived from a master seed and keys."""
    return int(np.random.SeedSequence([int(seed), *(key_int(k) for k in keys)]).generate_state(1)[0])


def mean_curve(gen: GeneratorSettings, age: float, sex: Sex) -> np.ndarray:
    """Expected log(count + 1) per epoch for a subject of the given age and sex."""
    hours = epoch_hours(EPOCHS_PER_DAY)

    def bump(center: float) -> np.ndarray:
        return np.exp(-0.5 * ((hours - center) / gen.bump_width_hours) ** 2)

    eta = (
        gen.baseline
        + gen.morning_amplitude * bump(gen.morning_hour)
        + gen.afternoon_amplitude * bump(gen.afternoon_hour)
        + gen.evening_amplitude * bump(gen.evening_hour)
    )
    # wake-up ramp before 7:00, wind-down after 21:00
    eta -= gen.night_decay * (np.clip(7.0 - hours, 0.0, None) + np.clip((hours - 21.0) / 2.5, 0.0, None))
    eta += gen.age_effect * (age - min(gen.ages)) + gen.male_effect * (Sex(sex) is Sex.MALE)
    return eta


def counts_from_log_scale(y: np.ndarray) -> np.ndarray:
    """Inverse link exp(y) - 1, clamped at zero and rounded."""
    return np.rint(np.maximum(np.expm1(y), 0.0)).astype(np.int64)


def ar1_noise(rng: np.random.Generator, sd: float, rho: float, size: int) -> np.ndarray:
    """Stationary AR(1) series with marginal SD sd and lag-1 correlation rho."""
    if sd == 0:
        return np.zeros(size)
    innovations = rng.standard_normal(size) * sd * np.sqrt(1.0 - rho ** 2)
    innovations[0] = rng.standard_normal() * sd
    return lfilter([1.0], [1.0, -rho], innovations)


def simulate_days(
    gen: GeneratorSettings,
    age: float,
    sex: Sex,
    seed: int,
    subject_key: str,
    n_days: int,
) -> Tuple[float, List[np.ndarray]]:
    """Subject intercept and complete daily counts for one subject."""
    subject_rng = keyed_rng(seed, "subject", subject_key)
    intercept = subject_rng.normal(0.0, gen.intercept_sd) if gen.intercept_sd > 0 else 0.0
    eta = mean_curve(gen, age, sex) + intercept
    days = []
    for day in range(1, n_days + 1):
        day_rng = keyed_rng(seed, "day", subject_key, day)
        days.append(counts_from_log_scale(eta + ar1_noise(day_rng, gen.noise_sd, gen.noise_ar, EPOCHS_PER_DAY)))
    return intercept, days


def generate_cohort(gen: GeneratorSettings, seed: int, show_progress: bool = False) -> CohortTable:
    """
    Complete cohort: subjects_per_cell subjects for every (age, sex) cell.

    Identical seeds give identical cohorts; every subject and day draws from
    its own keyed stream.
    """
    subjects: List[SubjectRecord] = []
    cells = [(age, sex) for age in gen.ages for sex in (Sex.FEMALE, Sex.MALE)]
    for age, sex in tqdm(cells, desc="Generating cohort", disable=not show_progress):
        for i in range(1, gen.subjects_per_cell + 1):
            subject_id = f"{sex.value}{age}-{i:04d}"
            covariate_rng = keyed_rng(seed, "covariates", subject_id)
            site = 1 if covariate_rng.random() < gen.site_share else 2
            bmi = float(np.clip(covariate_rng.normal(gen.bmi_mean, gen.bmi_sd), 0.0, 100.0))
            _, day_counts = simulate_days(gen, age, sex, seed, subject_id, gen.days_per_subject)
            days = tuple(
                EpochSeries(
                    subject_id=subject_id,
                    day_index=d,
                    counts=counts,
                    missing_mask=np.zeros(EPOCHS_PER_DAY, dtype=bool),
                )
                for d, counts in enumerate(day_counts, start=1)
            )
            subjects.append(SubjectRecord(
                subject_id=subject_id, sex=sex, site=site, age=float(age), bmi=round(bmi, 1), days=days,
            ))
    return CohortTable(subjects=subjects)


def _truncated_normal(rng: np.random.Generator, mean: float, sd: float, bounds: Tuple[float, float]) -> float:
    lo, hi = bounds
    a, b = (lo - mean) / sd, (hi - mean) / sd
    return float(truncnorm.rvs(a, b, loc=mean, scale=sd, random_state=rng))


def sample_day_segments(
    scenario: ScenarioSettings,
    age: float,
    sex: Sex,
    rng: np.random.Generator,
) -> List[Tuple[int, int, str]]:
    """
    Missing segments for one day as (start, stop, kind) epoch ranges.

    Segments shorter than the 30-minute rule are dropped: they would not be
    labelled missing.
    """
    segments: List[Tuple[int, int, str]] = []
    if scenario.case == "none":
        return segments

    shift = scenario.bedtime_age_slope_minutes * (age - scenario.reference_age)
    morning = _truncated_normal(rng, scenario.morning_mean_minutes + shift, scenario.bedtime_sd_minutes,
                                scenario.bedtime_bounds_minutes)
    night = _truncated_normal(rng, scenario.night_mean_minutes + shift, scenario.bedtime_sd_minutes,
                              scenario.bedtime_bounds_minutes)
    segments.append((0, int(round(morning * EPOCHS_PER_MINUTE)), "morning"))
    segments.append((EPOCHS_PER_DAY - int(round(night * EPOCHS_PER_MINUTE)), EPOCHS_PER_DAY, "night"))

    if scenario.case == "bedtime_plus_daytime":
        trigger = scenario.trigger_male if Sex(sex) is Sex.MALE else scenario.trigger_female
        if rng.random() < trigger:
            center = rng.normal(scenario.daytime_center_hour, scenario.daytime_sd_hours)
            length = _truncated_normal(rng, scenario.daytime_length_mean_minutes, scenario.daytime_length_sd_minutes,
                                       scenario.daytime_length_bounds_minutes) * EPOCHS_PER_MINUTE
            middle = (center - 6.0) * EPOCHS_PER_HOUR
            start = int(round(middle - length / 2.0))
            stop = int(round(middle + length / 2.0))
            segments.append((max(start, 0), min(stop, EPOCHS_PER_DAY), "daytime"))

    return [(start, stop, kind) for start, stop, kind in segments if stop - start >= MIN_ZEROED_RUN]


def impose_missingness(cohort: CohortTable, scenario: ScenarioSettings, seed: int) -> CohortTable:
    """
    Zero out sampled segments and label non-wear; no subject is dropped.

    Each (subject, day) uses its own keyed stream, so the result does not
    depend on subject order.
    """
    natural_runs = 0
    subjects = []
    for subject in cohort:
        days = []
        for day in subject.days:
            natural_runs += sum(
                1 for start, stop in ingest.runs_of(day.counts == 0) if stop - start >= MIN_ZEROED_RUN
            )
            rng = keyed_rng(seed, "missing", subject.subject_id, day.day_index)
            counts = np.array(day.counts)
            for start, stop, _ in sample_day_segments(scenario, subject.age, subject.sex, rng):
                counts[start:stop] = 0
            days.append(ingest.apply_nonwear_rule(replace(day, counts=counts)))
        subjects.append(replace(subject, days=tuple(days)))

    if natural_runs:
        logger.info(
            f"Complete data contained {natural_runs} zero runs long enough to be masked",
            extra={"natural_runs": natural_runs, "case": scenario.case}
        )
    return CohortTable(subjects=subjects)


def apply_missingness(
    cohort: CohortTable,
    scenario: ScenarioSettings,
    seed: int,
    min_wear_epochs: int = ingest.MIN_WEAR_EPOCHS,
    min_days: int = ingest.MIN_VALID_DAYS,
) -> CohortTable:
    """Impose the scenario, then apply the valid-day and valid-subject filters."""
    masked = impose_missingness(cohort, scenario, seed)
    return ingest.filter_valid(masked, min_wear_epochs=min_wear_epochs, min_days=min_days)


def true_frechet_mean(
    gen: GeneratorSettings,
    age: float,
    sex: Sex,
    transform: BoxCoxTransform,
    n_subject_days: int = 20000,
    seed: int = 0,
    n: int = N_GRID,
) -> Tuple[QuantileFunction, np.ndarray]:
    """
    Monte Carlo ground truth of E[Q_Y(p) | age, sex] without missing data.

    Simulates subjects with days_per_subject complete days each until
    n_subject_days subject-days are reached, and averages their Box-Cox
    quantile functions.

    Returns:
        (mean quantile function, pointwise Monte Carlo standard error)
    """
    n_subjects = int(np.ceil(n_subject_days / gen.days_per_subject))
    rows = np.empty((n_subjects, n))
    for i in range(n_subjects):
        _, day_counts = simulate_days(gen, age, Sex(sex), seed, f"truth-{Sex(sex).value}{age}-{i}",
                                      gen.days_per_subject)
        q = distq.subject_quantile(np.concatenate(day_counts), n)
        rows[i] = transform.forward(q.values)
    mean = np.maximum.accumulate(rows.mean(axis=0))
    se = rows.std(axis=0, ddof=1) / np.sqrt(n_subjects) if n_subjects > 1 else np.zeros(n)
    return QuantileFunction(mean, QuantileScale.BOXCOX), se


def ise(q_hat: QuantileFunction, q_true: QuantileFunction) -> float:
    """Integrated squared error; the same integral as the squared 2-Wasserstein distance."""
    return distq.wasserstein2(q_hat, q_true)


def bin_summary(cohort: CohortTable) -> pd.DataFrame:
    """Mean count and missing rate per half-hour bin and age (heat map data)."""
    rows = []
    for subject in cohort:
        for day in subject.days:
            counts = day.counts.reshape(N_BINS, EPOCHS_PER_BIN)
            mask = day.missing_mask.reshape(N_BINS, EPOCHS_PER_BIN)
            for b in range(N_BINS):
                rows.append({
                    "age": subject.age,
                    "sex": subject.sex.value,
                    "bin": b,
                    "hour": 6.0 + b / 2.0,
                    "mean_count": float(counts[b].mean()),
                    "missing_rate": float(mask[b].mean()),
                })
    frame = pd.DataFrame(rows, columns=["age", "sex", "bin", "hour", "mean_count", "missing_rate"])
    return frame.groupby(["age", "sex", "bin", "hour"], as_index=False)[["mean_count", "missing_rate"]].mean()
