"""
Simulation evaluation harness.

Each replicate generates a cohort, imposes the configured missingness, fits
QFR and the independent per-quantile baseline with and without the
missingness adjustment, plus a scalar-mean baseline, and scores every
estimate against Monte Carlo ground truth per (age, sex) cell.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator
from tqdm import tqdm

from distreg.config import Settings
from distreg.models.epoch import Sex
from distreg.models.quantile import BoxCoxTransform, QuantileFunction, QuantileScale
from distreg.models.regression import CELL_LABELS, DesignBlock, PosteriorDraws
from distreg.services import distq, missprof, posterior, qfr, quantlets, simgen
from distreg.utils.grid import N_BINS, grid_integral, quantile_grid
from distreg.utils.logging import log_stage

logger = logging.getLogger(__name__)

FLAM_PROBS = (
    1 / 1025, 0.01, 0.025, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.975, 0.99, 1024 / 1025,
)

@dataclass(frozen=True)
class GroundTruth:
    """Monte Carlo truth per (age, sex) cell on the shared Box-Cox scale."""

    transform: BoxCoxTransform
    quantiles: Dict[Tuple[int, str], QuantileFunction]
    mc_se: Dict[Tuple[int, str], np.ndarray]

    def mean(self, cell: Tuple[int, str]) -> float:
        return float(grid_integral(self.quantiles[cell].values))

    def mean_se_bound(self, cell: Tuple[int, str]) -> float:
        """
        Integral of the pointwise Monte Carlo SEs. An upper bound on the SE
        of the true mean, not the SE itself.
        """
        return float(grid_integral(self.mc_se[cell]))


def cell_vector(sex: Sex, age: float, bmi: float) -> np.ndarray:
    """Design vector for an (age, sex) cell averaged over both sites."""
    weights = np.zeros(len(CELL_LABELS))
    for site in (1, 2):
        weights[CELL_LABELS.index(f"{Sex(sex).value}{site}")] = 0.5
    return np.concatenate([weights, [age, bmi]])


def flam_values(q_matrix: np.ndarray) -> np.ndarray:
    """Subject quantiles read off at the 13 baseline probabilities."""
    grid = quantile_grid(q_matrix.shape[1])
    return np.vstack([np.interp(FLAM_PROBS, grid, row) for row in q_matrix])


def independent_quantile_baseline(
    q13: np.ndarray,
    design: DesignBlock,
    settings: Settings,
    seed: int,
) -> PosteriorDraws:
    """Separate mixed models for each of the 13 quantile levels, no borrowing across p."""
    return qfr.fit_qfr_gibbs(q13, design, settings.simulation.mcmc, settings.model.priors, seed=seed)


def interpolate_to_grid(values13: np.ndarray, n: int) -> np.ndarray:
    """Monotone cubic interpolation of 13 quantile values onto the full grid."""
    values13 = np.maximum.accumulate(np.asarray(values13, dtype=float))
    grid = quantile_grid(n)
    probs = np.asarray(FLAM_PROBS)
    return PchipInterpolator(probs, values13, extrapolate=False)(np.clip(grid, probs[0], probs[-1]))


def mean_bias_eval(
    estimates: Dict[str, Dict[Tuple[int, str], float]],
    truth: GroundTruth,
    replicate: Optional[int] = None,
) -> pd.DataFrame:
    """
    Bias of the estimated mean mu_Y per method and cell.

    Args:
        estimates: method -> cell -> estimated mu_Y
        truth: Ground truth
        replicate: Replicate index to tag rows with

    Returns:
        Rows: replicate, age, sex, method, estimate, truth, bias
    """
    rows = []
    for method, by_cell in estimates.items():
        for (age, sex), value in by_cell.items():
            true_mean = truth.mean((age, sex))
            rows.append({
                "replicate": replicate,
                "age": age,
                "sex": sex,
                "method": method,
                "estimate": value,
                "truth": true_mean,
                "bias": value - true_mean,
            })
    return pd.DataFrame(rows, columns=["replicate", "age", "sex", "method", "estimate", "truth", "bias"])


def pilot_transform(settings: Settings) -> BoxCoxTransform:
    """Box-Cox fit on a pilot replicate, shared by every replicate and the truth."""
    sim = settings.simulation
    seed = simgen.derive_seed(settings.seed, "pilot")
    cohort = simgen.generate_cohort(sim.generator, seed)
    cohort = simgen.apply_missingness(
        cohort, sim.scenario, seed,
        settings.preprocessing.min_wear_epochs, settings.preprocessing.min_days,
    )
    quantiles = distq.cohort_quantiles(cohort, settings.preprocessing.n_grid)
    return distq.fit_boxcox(
        distq.frechet_mean(quantiles),
        epsilon=settings.preprocessing.epsilon,
        grid_size=settings.preprocessing.lambda_grid_size,
    )


def ground_truth(settings: Settings, transform: BoxCoxTransform) -> GroundTruth:
    sim = settings.simulation
    quantiles, errors = {}, {}
    for age in sim.generator.ages:
        for sex in (Sex.FEMALE, Sex.MALE):
            q, se = simgen.true_frechet_mean(
                sim.generator, age, sex, transform,
                n_subject_days=sim.truth_subject_days,
                seed=simgen.derive_seed(settings.seed, "truth"),
                n=settings.preprocessing.n_grid,
            )
            quantiles[(age, sex.value)] = q
            errors[(age, sex.value)] = se
    return GroundTruth(transform=transform, quantiles=quantiles, mc_se=errors)


def _posterior_mean_quantile(draws: PosteriorDraws, basis, x_new, m_star, mapper, projector) -> np.ndarray:
    predicted = qfr.predict_quantile(draws, basis, x_new, m_star, mapper=mapper)
    return posterior.project_draws(predicted, projector).mean()


def run_replicate(settings: Settings, replicate: int, truth: GroundTruth) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Fit every method on one replicate.

    Returns:
        (ise rows, bias rows)
    """
    sim = settings.simulation
    pre = settings.preprocessing
    seed = simgen.derive_seed(settings.seed, "replicate", replicate)
    transform = truth.transform
    n = pre.n_grid

    cohort = simgen.generate_cohort(sim.generator, seed)
    cohort = simgen.apply_missingness(cohort, sim.scenario, seed, pre.min_wear_epochs, pre.min_days)

    q_matrix = transform.forward(distq.quantile_matrix(distq.cohort_quantiles(cohort, n)))
    q_matrix = np.maximum.accumulate(q_matrix, axis=1)

    profiles = missprof.cohort_profiles(cohort)
    m_matrix = np.vstack([p.m for p in profiles])
    fpc = missprof.fit_fpca(m_matrix, settings.fpca.fve, sim.k_m)
    scores = missprof.score_matrix(m_matrix, fpc)
    reference = missprof.project_scores(missprof.profile_from_rates(np.zeros(N_BINS), len(cohort)), fpc)

    basis = quantlets.build_quantlet_basis(
        q_matrix,
        ccc_min=settings.basis.ccc_min,
        k_max=settings.basis.k_max,
        smoothing_window=settings.basis.smoothing_window,
        k_override=sim.k_q,
        evaluate_loo=sim.k_q is None,
    )
    q_star = quantlets.project_matrix(q_matrix, basis)
    design = qfr.build_design(cohort.covariate_frame(), scores, settings.model.n_knots)
    projector = posterior.MonotoneProjector(n, settings.inference.n_isplines)

    q13 = flam_values(q_matrix)
    subject_means = grid_integral(q_matrix)
    bmi = float(design.mapper.bmi_center)

    ise_rows: List[dict] = []
    means: Dict[str, Dict[Tuple[int, str], float]] = {}
    variants = ((True, design), (False, design.without_missingness()))

    for adjusted, fit_design in variants:
        suffix = "adjusted" if adjusted else "unadjusted"
        m_new = reference if adjusted else np.zeros(0)
        qfr_draws = qfr.fit_qfr_gibbs(
            q_star, fit_design, sim.mcmc, settings.model.priors, seed=simgen.derive_seed(seed, "qfr", suffix),
        )
        flam_draws = independent_quantile_baseline(
            q13, fit_design, settings, seed=simgen.derive_seed(seed, "flam", suffix),
        )
        gam_draws = qfr.fit_qfr_gibbs(
            subject_means, fit_design, sim.mcmc, settings.model.priors,
            seed=simgen.derive_seed(seed, "gam", suffix),
        )
        means[f"qfr_{suffix}"], means[f"gam_{suffix}"] = {}, {}

        for age in sim.generator.ages:
            for sex in (Sex.FEMALE, Sex.MALE):
                cell = (age, sex.value)
                x_new = cell_vector(sex, age, bmi)
                q_true = truth.quantiles[cell]

                q_hat = _posterior_mean_quantile(qfr_draws, basis, x_new, m_new, design.mapper, projector)
                flam_coefficients = qfr.predict_coefficients(flam_draws, x_new, m_new, mapper=design.mapper)
                flam_hat = interpolate_to_grid(flam_coefficients.mean(axis=0), n)
                gam_hat = qfr.predict_coefficients(gam_draws, x_new, m_new, mapper=design.mapper)

                for method, values in ((f"qfr_{suffix}", q_hat), (f"flam_{suffix}", flam_hat)):
                    estimate = QuantileFunction(values, QuantileScale.BOXCOX)
                    ise_rows.append({
                        "replicate": replicate,
                        "age": age,
                        "sex": sex.value,
                        "method": method,
                        "ise": simgen.ise(estimate, q_true),
                    })
                means[f"qfr_{suffix}"][cell] = float(grid_integral(q_hat))
                means[f"gam_{suffix}"][cell] = float(gam_hat.mean())

    ise_frame = pd.DataFrame(ise_rows, columns=["replicate", "age", "sex", "method", "ise"])
    return ise_frame, mean_bias_eval(means, truth, replicate)


def _replicate_job(args):
    settings, replicate, truth = args
    return run_replicate(settings, replicate, truth)


def run_evaluation(
    settings: Settings,
    truth: Optional[GroundTruth] = None,
) -> Tuple[pd.DataFrame, pd.DataFrame, GroundTruth]:
    """
    Run every replicate of the configured simulation.

    Returns:
        (ise table, bias table, ground truth)
    """
    sim = settings.simulation
    if truth is None:
        with log_stage("pilot_boxcox") as details:
            transform = pilot_transform(settings)
            details["lam"] = transform.lam
        with log_stage("ground_truth", subject_days=sim.truth_subject_days):
            truth = ground_truth(settings, transform)

    jobs = [(settings, r, truth) for r in range(sim.replicates)]
    if settings.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=settings.workers) as pool:
            results = list(tqdm(pool.map(_replicate_job, jobs), total=len(jobs),
                                desc="Replicates", disable=not settings.show_progress))
    else:
        results = [
            _replicate_job(job)
            for job in tqdm(jobs, desc="Replicates", disable=not settings.show_progress)
        ]

    ise_table = pd.concat([r[0] for r in results], ignore_index=True)
    bias_table = pd.concat([r[1] for r in results], ignore_index=True)
    return ise_table, bias_table, truth


def ise_summary(ise_table: pd.DataFrame) -> pd.DataFrame:
    """Median and mean ISE per method and cell."""
    return (
        ise_table.groupby(["age", "sex", "method"], as_index=False)["ise"]
        .agg(median="median", mean="mean")
    )


def bias_summary(bias_table: pd.DataFrame, truth: GroundTruth) -> pd.DataFrame:
    """Average bias per method and cell, its replicate SE and the truth SE bound."""
    grouped = bias_table.groupby(["age", "sex", "method"], as_index=False)["bias"]
    table = grouped.agg(
        bias="mean",
        replicate_se=lambda v: float(np.std(v, ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0,
    )
    table["truth_se_bound"] = [truth.mean_se_bound((age, sex)) for age, sex in zip(table["age"], table["sex"])]
    return table
