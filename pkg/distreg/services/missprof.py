"""
Missingness profiles.
Per-bin missing rates, their empirical logits and the FPC basis of the logits.
"""
import logging
from typing import List, Optional, Sequence

import numpy as np

from distreg.models.epoch import CohortTable, EpochSeries
from distreg.models.missingness import FpcBasis, MissingnessProfile
from distreg.utils.grid import EPOCHS_PER_BIN, EPOCHS_PER_DAY, N_BINS

logger = logging.getLogger(__name__)

RANK_TOL = 1e-12


def elogit(x: np.ndarray, cohort_size: int) -> np.ndarray:
    """log{(x + 0.5/N) / (1 - x + 0.5/N)}, finite on [0, 1]."""
    if cohort_size < 1:
        raise ValueError("cohort size must be at least 1")
    x = np.asarray(x, dtype=float)
    c = 0.5 / cohort_size
    return np.log((x + c) / (1.0 - x + c))


def missingness_profile(days: Sequence[EpochSeries], cohort_size: int) -> MissingnessProfile:
    """
    Missing rate per half-hour bin pooled over the given days.

    Args:
        days: Valid days of one subject
        cohort_size: Post-filter number of subjects N used by the elogit

    Returns:
        MissingnessProfile with pi in [0, 1] and m = elogit(pi)
    """
    if len(days) == 0:
        raise ValueError("a missingness profile needs at least one day")
    masks = np.vstack([day.missing_mask for day in days])
    if masks.shape[1] != EPOCHS_PER_DAY:
        raise ValueError(f"expected {EPOCHS_PER_DAY} epochs per day")
    per_bin = masks.reshape(len(days), N_BINS, EPOCHS_PER_BIN).sum(axis=(0, 2))
    pi = per_bin / (len(days) * EPOCHS_PER_BIN)
    return MissingnessProfile(pi=pi, m=elogit(pi, cohort_size), n_days=len(days), cohort_size=cohort_size)


def profile_from_rates(pi: Sequence[float], cohort_size: int, n_days: int = 1) -> MissingnessProfile:
    """Profile for a hypothetical missing-rate pattern."""
    pi = np.clip(np.asarray(pi, dtype=float), 0.0, 1.0)
    return MissingnessProfile(pi=pi, m=elogit(pi, cohort_size), n_days=n_days, cohort_size=cohort_size)


def cohort_profiles(cohort: CohortTable) -> List[MissingnessProfile]:
    """One profile per subject, with N the cohort size."""
    n = len(cohort)
    return [missingness_profile(subject.days, n) for subject in cohort]


def fit_fpca(
    m_matrix: np.ndarray,
    fve_target: float = 0.99,
    k_override: Optional[int] = None,
) -> FpcBasis:
    """
    Matrix PCA of the centered logit profiles.

    The covariance uses divisor N, so the mean squared reconstruction error
    over the training rows equals the sum of the discarded eigenvalues.

    Args:
        m_matrix: N x bins matrix of elogit profiles
        fve_target: Fraction of variance explained to reach
        k_override: Fixed number of components, capped at the available rank

    Returns:
        FpcBasis with components as rows, largest-magnitude entry positive
    """
    m_matrix = np.asarray(m_matrix, dtype=float)
    n = m_matrix.shape[0]
    if n < 2:
        raise ValueError("fit_fpca needs at least two subjects")
    if not 0 < fve_target <= 1:
        raise ValueError("fve_target must lie in (0, 1]")

    mean = m_matrix.mean(axis=0)
    centered = m_matrix - mean
    covariance = centered.T @ centered / n

    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    total = float(eigenvalues.sum())
    rank = int(np.sum(eigenvalues > RANK_TOL * max(eigenvalues[0], RANK_TOL)))
    if total <= 0:
        rank = 0

    if rank == 0:
        k = 0
    elif k_override is not None:
        k = min(int(k_override), rank)
        if k < k_override:
            logger.warning(
                f"Requested {k_override} components but covariance rank is {rank}",
                extra={"k_override": k_override, "rank": rank}
            )
    else:
        explained = np.cumsum(eigenvalues[:rank]) / total
        k = int(np.searchsorted(explained, fve_target - 1e-12) + 1)
        k = min(k, rank)

    components = eigenvectors[:, :k].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0

    fve = float(eigenvalues[:k].sum() / total) if total > 0 else 1.0
    logger.info(
        f"Missingness FPCA kept {k} components (FVE {fve:.4f})",
        extra={"k_m": k, "fve": fve, "n_subjects": n, "rank": rank}
    )
    return FpcBasis(
        mean=mean,
        components=components,
        eigenvalues=eigenvalues[:k],
        fve=fve,
        n_subjects=n,
        total_variance=total,
    )


def project_scores(profile: MissingnessProfile, basis: FpcBasis) -> np.ndarray:
    """FPC scores M* of one profile."""
    return basis.components @ (profile.m - basis.mean)


def score_matrix(m_matrix: np.ndarray, basis: FpcBasis) -> np.ndarray:
    """N x K_M scores for a matrix of logit profiles."""
    return (np.asarray(m_matrix, dtype=float) - basis.mean) @ basis.components.T


def reconstruct_profile(scores: np.ndarray, basis: FpcBasis) -> np.ndarray:
    """Logit profile implied by FPC scores."""
    return basis.mean + np.asarray(scores, dtype=float) @ basis.components
