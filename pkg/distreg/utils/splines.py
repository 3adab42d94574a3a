"""
Spline helpers: cubic B-spline design matrices, the Demmler-Reinsch
reparameterization of a second-order difference penalty, and I-splines.
"""
import logging
from typing import Tuple

import numpy as np
from scipy.interpolate import BSpline

logger = logging.getLogger(__name__)

SPLINE_DEGREE = 3


def padded_knots(interior: np.ndarray, lo: float, hi: float,
                 degree: int = SPLINE_DEGREE) -> np.ndarray:
    """Interior knots padded with degree + 1 copies of each boundary."""
    interior = np.asarray(interior, dtype=float)
    return np.concatenate([np.repeat(lo, degree + 1), interior, np.repeat(hi, degree + 1)])


def bspline_design(x: np.ndarray, interior: np.ndarray, lo: float, hi: float,
                   degree: int = SPLINE_DEGREE) -> np.ndarray:
    """
    Dense B-spline design matrix with len(interior) + degree + 1 columns.

    Args:
        x: Evaluation points inside [lo, hi]
        interior: Strictly increasing interior knots
        lo: Lower boundary knot
        hi: Upper boundary knot
        degree: Spline degree (default cubic)

    Returns:
        Array of shape (len(x), len(interior) + degree + 1)
    """
    x = np.clip(np.asarray(x, dtype=float), lo, hi)
    knots = padded_knots(interior, lo, hi, degree)
    return BSpline.design_matrix(x, knots, degree).toarray()


def select_knots(x: np.ndarray, n_knots: int) -> Tuple[np.ndarray, str]:
    """
    Interior knots at the k/(J+1) quantiles of x.

    Falls back to quantiles of the unique values and then to equally spaced
    knots when quantile knots are tied or touch the boundary.

    Returns:
        (knots, method) where method is "quantile", "unique_quantile" or "equal"
    """
    x = np.asarray(x, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    probs = np.arange(1, n_knots + 1) / (n_knots + 1)

    def usable(knots: np.ndarray) -> bool:
        return bool(np.all(np.diff(knots) > 0) and knots[0] > lo and knots[-1] < hi)

    knots = np.quantile(x, probs)
    if usable(knots):
        return knots, "quantile"

    knots = np.quantile(np.unique(x), probs)
    if usable(knots):
        return knots, "unique_quantile"

    return lo + probs * (hi - lo), "equal"


def difference_penalty(n_basis: int, order: int = 2) -> np.ndarray:
    """D'D for the order-th difference operator on n_basis coefficients."""
    d = np.diff(np.eye(n_basis), n=order, axis=0)
    return d.T @ d


def demmler_reinsch_transform(n_basis: int, order: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    """
    Map B-spline coefficients to the penalized directions of D'D.

    Returns:
        (transform, eigenvalues): transform is n_basis x (n_basis - order),
        eigenvectors of the penalty scaled by eigenvalue^(-1/2), so a N(0, tau I)
        prior on the new coefficients equals the difference penalty on the
        original ones.
    """
    eigenvalues, eigenvectors = np.linalg.eigh(difference_penalty(n_basis, order))
    eigenvalues = eigenvalues[order:]
    eigenvectors = eigenvectors[:, order:]
    if np.any(eigenvalues <= 0):
        raise ValueError("difference penalty has more than a 2-dimensional null space")
    return eigenvectors / np.sqrt(eigenvalues), eigenvalues


def ispline_basis(p: np.ndarray, n_isplines: int = 20,
                  degree: int = SPLINE_DEGREE) -> np.ndarray:
    """
    I-spline basis on [0, 1] with equally spaced knots.

    I_j is the tail sum of B-splines j..n_isplines of an (n_isplines + 1)
    B-spline basis; each column is non-decreasing with values in [0, 1].
    """
    n_bsplines = n_isplines + 1
    n_interior = n_bsplines - degree - 1
    if n_interior < 0:
        raise ValueError(f"{n_isplines} I-splines are too few for degree {degree}")
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    design = bspline_design(p, interior, 0.0, 1.0, degree)
    tails = np.cumsum(design[:, ::-1], axis=1)[:, ::-1]
    return np.clip(tails[:, 1:], 0.0, 1.0)
