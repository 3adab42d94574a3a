"""
Quantile functional regression in quantlet-coefficient space.

Each coefficient k of Q*_i gets its own Gaussian mixed model

    Q*_ik = X_i beta_k + M*_i beta_miss,k + Z_age,i u_age,k + Z_bmi,i u_bmi,k + E_ik

with u ~ N(0, tau I), E ~ N(0, s), a N(0, v I) prior on the fixed effects and
inverse-gamma priors on the variances. The models are independent, so they
are sampled separately with seeds keyed by (master seed, k).
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.linalg import cho_solve, cholesky, solve_triangular
from tqdm import tqdm

from distreg.config import McmcSettings, PriorSettings
from distreg.exceptions import DesignError, SamplerInputError
from distreg.models.epoch import Sex
from distreg.models.quantile import QuantileDraws, QuantileScale
from distreg.models.quantlet import QuantletBasis
from distreg.models.regression import (
    CELL_LABELS,
    N_CELLS,
    DesignBlock,
    DesignMapper,
    PosteriorDraws,
    SplineMap,
)
from distreg.utils.splines import bspline_design, demmler_reinsch_transform, select_knots

logger = logging.getLogger(__name__)

CELL_SUM_TOL = 1e-8


def cell_indicators(sex: Sequence[str], site: Sequence[int]) -> np.ndarray:
    """N x 4 cell-mean indicators in the order F1, F2, M1, M2."""
    labels = [f"{Sex(s).value}{int(t)}" for s, t in zip(sex, site)]
    cells = np.zeros((len(labels), N_CELLS))
    for row, label in enumerate(labels):
        if label not in CELL_LABELS:
            raise DesignError(f"unknown sex-by-site cell {label}")
        cells[row, CELL_LABELS.index(label)] = 1.0
    return cells


def fit_spline_map(x: np.ndarray, n_knots: int = 5, name: str = "covariate") -> SplineMap:
    """
    DR-spline map of a covariate: cubic B-splines on quantile knots, the
    penalized directions of a second-order difference penalty, projected off
    span{1, x} on the training values.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DesignError(f"{name} has missing values")
    if np.ptp(x) == 0:
        raise DesignError("degenerate spline covariate")

    knots, method = select_knots(x, n_knots)
    if method != "quantile":
        logger.warning(
            f"{name} knots fell back to {method} placement",
            extra={"covariate": name, "knot_method": method}
        )
    lo, hi = float(x.min()), float(x.max())
    transform, _ = demmler_reinsch_transform(n_knots + 4)
    raw = bspline_design(x, knots, lo, hi) @ transform
    linear = np.column_stack([np.ones_like(x), x])
    projection, *_ = np.linalg.lstsq(linear, raw, rcond=None)
    return SplineMap(
        interior_knots=knots,
        lo=lo,
        hi=hi,
        transform=transform,
        projection=projection,
        knot_method=method,
    )


def build_design(
    covariates: pd.DataFrame,
    m_star: np.ndarray,
    n_knots: int = 5,
) -> DesignBlock:
    """
    Build the regression design for a cohort.

    Args:
        covariates: One row per subject with subject_id, sex, site, age, bmi
        m_star: N x K_M missingness scores, row-aligned with covariates
        n_knots: Interior knots J of each DR spline

    Returns:
        DesignBlock with X = [cells, centered age, centered bmi] and J + 2
        column DR-spline blocks for age and bmi
    """
    required = ["sex", "site", "age", "bmi"]
    if covariates[required].isna().any().any():
        raise DesignError("covariates must be complete for every subject")
    m_star = np.asarray(m_star, dtype=float).reshape(len(covariates), -1)

    age = covariates["age"].to_numpy(dtype=float)
    bmi = covariates["bmi"].to_numpy(dtype=float)
    mapper = DesignMapper(
        age_spline=fit_spline_map(age, n_knots, "age"),
        bmi_spline=fit_spline_map(bmi, n_knots, "bmi"),
        age_center=float(age.mean()),
        bmi_center=float(bmi.mean()),
    )
    cells = cell_indicators(covariates["sex"], covariates["site"])
    subject_ids = tuple(covariates["subject_id"]) if "subject_id" in covariates else ()
    return DesignBlock(
        x=mapper.fixed_rows(cells, age, bmi),
        m_star=m_star,
        z_age=mapper.age_spline(age),
        z_bmi=mapper.bmi_spline(bmi),
        mapper=mapper,
        subject_ids=subject_ids,
    )


def design_row(mapper: DesignMapper, x_new: Sequence[float]):
    """
    Design vectors for raw covariates (4 cell weights, age, bmi).

    Returns:
        (x, z_age, z_bmi) with x centered like the training design
    """
    x_new = np.asarray(x_new, dtype=float)
    _check_cells(x_new)
    x = mapper.fixed_rows(x_new[:N_CELLS], x_new[4], x_new[5])[0]
    return x, mapper.age_spline(x_new[4])[0], mapper.bmi_spline(x_new[5])[0]


def _check_cells(x_new: np.ndarray) -> None:
    if x_new.shape != (6,):
        raise DesignError("a design vector has 4 cell weights, age and bmi")
    cells = x_new[:N_CELLS]
    if np.any(cells < 0) or abs(cells.sum() - 1.0) > CELL_SUM_TOL:
        raise DesignError(f"cell-mean weights must be non-negative and sum to 1, got {cells.tolist()}")


class CoefficientSampler:
    """Blocked Gibbs sampler for one response column."""

    def __init__(
        self,
        y: np.ndarray,
        x: np.ndarray,
        z_blocks: Sequence[np.ndarray],
        priors: PriorSettings,
    ):
        self.y = y
        self.x = x
        self.z_blocks = [z for z in z_blocks if z.shape[1] > 0]
        self.priors = priors
        self.n = y.shape[0]

        self.xtx = x.T @ x
        self.xty = x.T @ y
        self.ztz = [z.T @ z for z in self.z_blocks]
        self.zty = [z.T @ y for z in self.z_blocks]
        self.xtz = [x.T @ z for z in self.z_blocks]
        self.zjtz = {
            (a, b): self.z_blocks[a].T @ self.z_blocks[b]
            for a in range(len(self.z_blocks))
            for b in range(len(self.z_blocks))
            if a != b
        }

    @staticmethod
    def _gaussian(precision: np.ndarray, linear: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw from N(precision^-1 linear, precision^-1)."""
        upper = cholesky(precision, lower=False)
        mean = cho_solve((upper, False), linear)
        return mean + solve_triangular(upper, rng.standard_normal(linear.shape[0]), lower=False)

    def _inverse_gamma(self, shape: float, rate: float, rng: np.random.Generator) -> float:
        return 1.0 / rng.gamma(shape, 1.0 / rate)

    def run(self, mcmc: McmcSettings, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        p = self.x.shape[1]
        a0, b0 = self.priors.ig_shape, self.priors.ig_rate
        prior_precision = np.eye(p) / self.priors.beta_variance

        beta, *_ = np.linalg.lstsq(self.x, self.y, rcond=None)
        u = [np.zeros(z.shape[1]) for z in self.z_blocks]
        tau = [1.0 for _ in self.z_blocks]
        resid = self.y - self.x @ beta
        s = max(float(resid @ resid) / max(self.n - p, 1), 1e-8)

        n_total = mcmc.burn_in + mcmc.keep * mcmc.thin
        out_beta = np.empty((mcmc.keep, p))
        out_u = [np.empty((mcmc.keep, z.shape[1])) for z in self.z_blocks]
        out_tau = np.empty((mcmc.keep, len(self.z_blocks)))
        out_s = np.empty(mcmc.keep)

        kept = 0
        for it in range(n_total):
            linear = self.xty - sum(xtz @ uj for xtz, uj in zip(self.xtz, u))
            beta = self._gaussian(self.xtx / s + prior_precision, linear / s, rng)

            for j, z in enumerate(self.z_blocks):
                linear = self.zty[j] - self.xtz[j].T @ beta
                for other in range(len(self.z_blocks)):
                    if other != j:
                        linear = linear - self.zjtz[(j, other)] @ u[other]
                precision = self.ztz[j] / s + np.eye(z.shape[1]) / tau[j]
                u[j] = self._gaussian(precision, linear / s, rng)

            for j, uj in enumerate(u):
                tau[j] = self._inverse_gamma(a0 + uj.size / 2.0, b0 + float(uj @ uj) / 2.0, rng)

            fitted = self.x @ beta
            for z, uj in zip(self.z_blocks, u):
                fitted = fitted + z @ uj
            resid = self.y - fitted
            s = self._inverse_gamma(a0 + self.n / 2.0, b0 + float(resid @ resid) / 2.0, rng)

            if it >= mcmc.burn_in and (it - mcmc.burn_in) % mcmc.thin == 0:
                out_beta[kept] = beta
                for j, uj in enumerate(u):
                    out_u[j][kept] = uj
                out_tau[kept] = tau
                out_s[kept] = s
                kept += 1

        return {"beta": out_beta, "u": out_u, "tau": out_tau, "s": out_s}


def _sample_column(args) -> Dict[str, np.ndarray]:
    y, x, z_blocks, mcmc, priors, seed, k = args
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
    return CoefficientSampler(y, x, z_blocks, priors).run(mcmc, rng)


def _fit_columns(
    responses: np.ndarray,
    design: DesignBlock,
    mcmc: McmcSettings,
    priors: PriorSettings,
    seed: int,
    response: str,
    workers: int = 1,
    show_progress: bool = False,
) -> PosteriorDraws:
    responses = np.asarray(responses, dtype=float)
    if responses.ndim == 1:
        responses = responses[:, None]
    if responses.shape[0] != design.n:
        raise SamplerInputError(
            f"{responses.shape[0]} response rows but {design.n} design rows"
        )
    for name, arr in (("response", responses), ("x", design.x), ("m_star", design.m_star),
                      ("z_age", design.z_age), ("z_bmi", design.z_bmi)):
        if not np.all(np.isfinite(arr)):
            raise SamplerInputError(f"non-finite values in {name}")

    x_full = np.hstack([design.x, design.m_star])
    z_blocks = [design.z_age, design.z_bmi]
    k_total = responses.shape[1]
    jobs = [(responses[:, k], x_full, z_blocks, mcmc, priors, seed, k) for k in range(k_total)]

    if workers > 1 and k_total > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sample_column, jobs))
    else:
        results = [_sample_column(job) for job in tqdm(jobs, desc=f"Gibbs {response}", disable=not show_progress)]

    n_fixed = design.x.shape[1]
    beta = np.stack([r["beta"][:, :n_fixed] for r in results], axis=1)
    beta_miss = np.stack([r["beta"][:, n_fixed:] for r in results], axis=1)
    s = np.stack([r["s"] for r in results], axis=1)

    enabled = [i for i, z in enumerate(z_blocks) if z.shape[1] > 0]

    def block(index: int):
        if index not in enabled:
            return np.zeros((mcmc.keep, k_total, 0)), np.full((mcmc.keep, k_total), np.nan)
        position = enabled.index(index)
        u = np.stack([r["u"][position] for r in results], axis=1)
        tau = np.stack([r["tau"][:, position] for r in results], axis=1)
        return u, tau

    u_age, tau_age = block(0)
    u_bmi, tau_bmi = block(1)

    metadata = {
        "response": response,
        "burn_in": mcmc.burn_in,
        "keep": mcmc.keep,
        "thin": mcmc.thin,
        "seed": seed,
        "coefficient_seeds": [[seed, k] for k in range(k_total)],
        "priors": priors.model_dump(),
        "design": design.mapper.to_dict() if design.mapper is not None else None,
        "subject_ids": list(design.subject_ids),
    }
    logger.info(
        f"Sampled {k_total} {response} coefficients, {mcmc.keep} draws each",
        extra={"response": response, "k": k_total, "keep": mcmc.keep, "k_m": design.k_m}
    )
    return PosteriorDraws(
        beta=beta,
        beta_miss=beta_miss,
        u_age=u_age,
        u_bmi=u_bmi,
        tau_age=tau_age,
        tau_bmi=tau_bmi,
        s=s,
        metadata=metadata,
    )


def fit_qfr_gibbs(
    q_star: np.ndarray,
    design: DesignBlock,
    mcmc: Optional[McmcSettings] = None,
    priors: Optional[PriorSettings] = None,
    seed: int = 0,
    workers: int = 1,
    show_progress: bool = False,
) -> PosteriorDraws:
    """
    Gibbs sampling of the per-coefficient mixed models.

    Args:
        q_star: N x K_Q quantlet coefficients
        design: Row-aligned design; an empty M* block drops the missingness
            adjustment and empty spline blocks drop the random effects
        mcmc: Burn-in, retained draws and thinning
        priors: Fixed-effect prior variance and inverse-gamma shape/rate
        seed: Master seed; coefficient k uses SeedSequence(seed, spawn_key=(k,))
        workers: Processes for sampling coefficients in parallel

    Returns:
        PosteriorDraws indexed [draw, coefficient, ...]

    Raises:
        SamplerInputError: On non-finite or misaligned inputs
    """
    return _fit_columns(
        q_star, design, mcmc or McmcSettings(), priors or PriorSettings(), seed, "quantlet", workers, show_progress,
    )


def fit_missingness_regression(
    m_star: np.ndarray,
    design: DesignBlock,
    mcmc: Optional[McmcSettings] = None,
    priors: Optional[PriorSettings] = None,
    seed: int = 0,
    workers: int = 1,
    show_progress: bool = False,
) -> PosteriorDraws:
    """Regression of the missingness scores M* on X and the splines, f(M* | X)."""
    return _fit_columns(
        m_star, design.without_missingness(), mcmc or McmcSettings(), priors or PriorSettings(),
        seed, "missingness", workers, show_progress,
    )


def predict_coefficients(
    draws: PosteriorDraws,
    x_new: Sequence[float],
    m_star_new: Optional[Sequence[float]] = None,
    z_age_new: Optional[Sequence[float]] = None,
    z_bmi_new: Optional[Sequence[float]] = None,
    mapper: Optional[DesignMapper] = None,
) -> np.ndarray:
    """
    Conditional-mean coefficients per draw, R x K.

    With a mapper, x_new holds raw covariates (4 cell weights, age, bmi) and
    the spline rows are computed from the stored knots unless given. Without
    one, x_new must already be a training-scale design row and both spline
    rows must be supplied.
    """
    x_new = np.asarray(x_new, dtype=float)
    _check_cells(x_new)
    if mapper is not None:
        x_row, z_age, z_bmi = design_row(mapper, x_new)
        z_age = z_age if z_age_new is None else np.asarray(z_age_new, dtype=float)
        z_bmi = z_bmi if z_bmi_new is None else np.asarray(z_bmi_new, dtype=float)
    else:
        if z_age_new is None or z_bmi_new is None:
            raise DesignError("spline rows are required without a design mapper")
        x_row = x_new
        z_age = np.asarray(z_age_new, dtype=float)
        z_bmi = np.asarray(z_bmi_new, dtype=float)

    m_star = np.zeros(draws.k_m) if m_star_new is None else np.asarray(m_star_new, dtype=float)
    if m_star.shape != (draws.k_m,):
        raise DesignError(f"expected {draws.k_m} missingness scores, got {m_star.shape}")
    return draws.coefficient_means(
        x_row,
        m_star,
        z_age[: draws.u_age.shape[2]],
        z_bmi[: draws.u_bmi.shape[2]],
    )


def predict_quantile(
    draws: PosteriorDraws,
    basis: QuantletBasis,
    x_new: Sequence[float],
    m_star_new: Optional[Sequence[float]] = None,
    z_age_new: Optional[Sequence[float]] = None,
    z_bmi_new: Optional[Sequence[float]] = None,
    mapper: Optional[DesignMapper] = None,
) -> QuantileDraws:
    """
    Per-draw predicted Box-Cox quantile functions (conditional means, no
    residual noise). M* defaults to 0, the cohort-mean missingness pattern.
    Monotonicity is left to the projection step.
    """
    if draws.k != basis.k:
        raise DesignError(f"draws have {draws.k} coefficients, basis has {basis.k}")
    coefficients = predict_coefficients(draws, x_new, m_star_new, z_age_new, z_bmi_new, mapper)
    return QuantileDraws(coefficients @ basis.psi, QuantileScale.BOXCOX)


def fixed_effect_summary(draws: PosteriorDraws, labels: Optional[List[str]] = None) -> pd.DataFrame:
    """Posterior mean and 95% interval of every fixed effect per response column."""
    labels = labels or [*CELL_LABELS, "age", "bmi"]
    rows = []
    for k in range(draws.k):
        for j, label in enumerate(labels):
            samples = draws.beta[:, k, j]
            rows.append({
                "response": k + 1,
                "effect": label,
                "mean": float(samples.mean()),
                "sd": float(samples.std()),
                "q025": float(np.quantile(samples, 0.025)),
                "q975": float(np.quantile(samples, 0.975)),
            })
    return pd.DataFrame(rows, columns=["response", "effect", "mean", "sd", "q025", "q975"])
