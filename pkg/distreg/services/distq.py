"""
Subject quantile functions.
Discrete value quantiles, monotone smoothing onto the common grid, Frechet
means, the Box-Cox transform and the 2-Wasserstein distance.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.stats import boxcox_llf
from tqdm import tqdm

from distreg.exceptions import BoxCoxFitError, NonMonotoneQuantileError, ScaleMismatchError
from distreg.models.epoch import CohortTable
from distreg.models.quantile import (
    DEFAULT_EPSILON,
    MONOTONE_TOL,
    BoxCoxTransform,
    QuantileFunction,
    QuantileScale,
)
from distreg.utils.grid import N_GRID, grid_integral, quantile_grid

logger = logging.getLogger(__name__)

LAMBDA_GRID_SIZE = 199


def lambda_grid(size: int = LAMBDA_GRID_SIZE) -> np.ndarray:
    """Candidate Box-Cox exponents on [-2, 2]."""
    return np.linspace(-2.0, 2.0, size)


def discrete_value_quantile(counts: Sequence[int]) -> List[Tuple[int, float]]:
    """
    Cut-points of the empirical step quantile function.

    For every distinct observed value k, the smallest subject-grid
    probability l/(n_i+1) whose order statistic equals k.

    Args:
        counts: Unmasked non-negative integer counts

    Returns:
        (value, p) pairs, strictly increasing in both coordinates
    """
    counts = np.asarray(counts)
    if counts.size < 2:
        raise ValueError(f"discrete value quantiles need at least two observations, got {counts.size}")
    ordered = np.sort(counts, kind="stable")
    values, first = np.unique(ordered, return_index=True)
    probs = (first + 1) / (ordered.size + 1)
    return [(int(k), float(p)) for k, p in zip(values, probs)]


def monotone_smooth_quantile(steps: Sequence[Tuple[float, float]], n: int = N_GRID) -> QuantileFunction:
    """
    Shape-preserving cubic interpolation of quantile cut-points.

    Passes through every (value, p) pair and is held constant outside the
    first and last supplied p.
    """
    if len(steps) == 0:
        raise ValueError("at least one cut-point is required")
    values = np.array([v for v, _ in steps], dtype=float)
    probs = np.array([p for _, p in steps], dtype=float)
    grid = quantile_grid(n)

    if values.size == 1:
        return QuantileFunction(np.full(n, values[0]), QuantileScale.COUNT)

    interpolant = PchipInterpolator(probs, values, extrapolate=False)
    smoothed = interpolant(np.clip(grid, probs[0], probs[-1]))
    q = QuantileFunction(np.maximum(smoothed, 0.0), QuantileScale.COUNT)
    return q if q.is_monotone(0.0) else _repair(q)


def _repair(q: QuantileFunction) -> QuantileFunction:
    worst = float(np.max(-np.diff(q.values)))
    if worst > MONOTONE_TOL:
        raise NonMonotoneQuantileError(f"quantile decreases by {worst:.3e}")
    return q.repaired()


def subject_quantile(counts: Sequence[int], n: int = N_GRID) -> QuantileFunction:
    """Smoothed count-scale quantile function of one subject's unmasked counts."""
    return monotone_smooth_quantile(discrete_value_quantile(counts), n)


def cohort_quantiles(cohort: CohortTable, n: int = N_GRID, show_progress: bool = False) -> List[QuantileFunction]:
    """Count-scale quantile function per subject, pooling all valid days."""
    return [
        subject_quantile(subject.observed_counts, n)
        for subject in tqdm(cohort, desc="Quantile functions", disable=not show_progress)
    ]


def _common_scale(quantiles: Sequence[QuantileFunction]) -> QuantileScale:
    scales = {q.scale for q in quantiles}
    if len(scales) > 1:
        raise ScaleMismatchError(f"mixed scales: {sorted(s.value for s in scales)}")
    sizes = {q.n for q in quantiles}
    if len(sizes) > 1:
        raise ScaleMismatchError(f"mixed grid sizes: {sorted(sizes)}")
    return scales.pop()


def quantile_matrix(quantiles: Sequence[QuantileFunction]) -> np.ndarray:
    """Stack quantile functions of one scale into an N x n matrix."""
    _common_scale(quantiles)
    return np.vstack([q.values for q in quantiles])


def frechet_mean(
    quantiles: Sequence[QuantileFunction],
    weights: Optional[Sequence[float]] = None,
) -> QuantileFunction:
    """
    Wasserstein barycenter of 1-D distributions: the pointwise (weighted)
    average of their quantile functions.
    """
    if len(quantiles) == 0:
        raise ValueError("frechet_mean of an empty collection")
    scale = _common_scale(quantiles)
    matrix = np.vstack([q.values for q in quantiles])
    mean = np.average(matrix, axis=0, weights=weights)
    return QuantileFunction(np.maximum.accumulate(mean), scale)


def fit_boxcox(
    frechet: QuantileFunction,
    epsilon: float = DEFAULT_EPSILON,
    grid_size: int = LAMBDA_GRID_SIZE,
) -> BoxCoxTransform:
    """
    Profile-likelihood Box-Cox fit over the lambda grid.

    Values are shifted by epsilon, the same shift used by the transform.
    """
    data = np.asarray(frechet.values, dtype=float) + epsilon
    if np.any(data <= 0):
        raise BoxCoxFitError("Box-Cox needs positive values after the epsilon shift")

    lambdas = lambda_grid(grid_size)
    with np.errstate(all="ignore"):
        llf = np.array([boxcox_llf(lam, data) for lam in lambdas], dtype=float)
    finite = np.isfinite(llf)
    if not finite.any():
        raise BoxCoxFitError("Box-Cox log-likelihood is not finite on the lambda grid")

    best = int(np.argmax(np.where(finite, llf, -np.inf)))
    lam = float(lambdas[best])
    logger.info(
        f"Box-Cox lambda {lam:.8f}",
        extra={"lam": lam, "llf": float(llf[best]), "epsilon": epsilon}
    )
    return BoxCoxTransform(lam=lam, epsilon=epsilon)


def apply_boxcox(q: QuantileFunction, transform: BoxCoxTransform) -> QuantileFunction:
    """Count-scale quantile function to the Box-Cox scale."""
    if q.scale is not QuantileScale.COUNT:
        raise ScaleMismatchError("apply_boxcox expects a count-scale quantile function")
    return QuantileFunction(transform.forward(q.values), QuantileScale.BOXCOX)


def inverse_boxcox(q: QuantileFunction, transform: BoxCoxTransform) -> QuantileFunction:
    """Box-Cox-scale quantile function back to counts, clamped at zero."""
    if q.scale is not QuantileScale.BOXCOX:
        raise ScaleMismatchError("inverse_boxcox expects a boxcox-scale quantile function")
    return QuantileFunction(transform.inverse(q.values), QuantileScale.COUNT)


def wasserstein2(q1: QuantileFunction, q2: QuantileFunction) -> float:
    """Squared 2-Wasserstein distance: integral of (Q1 - Q2)^2 over (0, 1)."""
    _common_scale([q1, q2])
    return float(grid_integral((q1.values - q2.values) ** 2))


def values_at(q: QuantileFunction, probs: Sequence[float]) -> np.ndarray:
    """Linear read-off of a quantile function at arbitrary probabilities."""
    return np.interp(np.asarray(probs, dtype=float), q.grid, q.values)
