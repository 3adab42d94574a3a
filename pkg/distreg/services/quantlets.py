"""
Quantlet basis service.

The basis starts with the normalized constant and the orthogonalized standard
normal quantile function, followed by smoothed principal components of the
residuals left after projecting every subject onto those two elements. All
inner products use the grid quadrature weights, so orthogonal projection
minimizes the 2-Wasserstein reconstruction loss.
"""
import logging
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.stats import norm
from tqdm import tqdm

from distreg.exceptions import NonMonotoneQuantileError, QuantletBasisError
from distreg.models.quantile import MONOTONE_TOL, QuantileFunction, QuantileScale
from distreg.models.quantlet import QuantletBasis
from distreg.utils.grid import grid_weights, quantile_grid

logger = logging.getLogger(__name__)

N_GAUSSIAN = 2
COMPONENT_TOL = 1e-10


def gaussian_elements(n: int) -> np.ndarray:
    """Rows: normalized constant, then Phi^-1 orthogonalized and normalized."""
    w = grid_weights(n)
    constant = np.ones(n) / np.sqrt(w.sum())
    probit = norm.ppf(quantile_grid(n))
    probit = probit - (probit @ (w * constant)) * constant
    probit /= np.sqrt(probit @ (w * probit))
    return np.vstack([constant, probit])


def concordance(a: np.ndarray, b: np.ndarray) -> float:
    """Concordance correlation coefficient of two vectors (population moments)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mean_a, mean_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    cov = np.mean((a - mean_a) * (b - mean_b))
    denominator = var_a + var_b + (mean_a - mean_b) ** 2
    if denominator == 0:
        return 1.0 if np.array_equal(a, b) else 0.0
    return float(2.0 * cov / denominator)


def _orthonormalize(candidates: np.ndarray, fixed: np.ndarray, w: np.ndarray, scale: float) -> np.ndarray:
    """Weighted Gram-Schmidt of candidate rows against fixed rows and each other."""
    kept = [row for row in fixed]
    for row in candidates:
        v = row.copy()
        for _ in range(2):
            for e in kept:
                v -= (v @ (w * e)) * e
        norm_v = np.sqrt(v @ (w * v))
        if norm_v <= COMPONENT_TOL * scale:
            continue
        kept.append(v / norm_v)
    return np.vstack(kept[len(fixed):]) if len(kept) > len(fixed) else np.zeros((0, fixed.shape[1]))


def _residual_components(
    residuals: np.ndarray,
    gram: np.ndarray,
    n_components: int,
    fixed: np.ndarray,
    w: np.ndarray,
    window: int,
    scale: float,
) -> np.ndarray:
    """
    Leading principal directions of the residual rows, smoothed and
    re-orthonormalized. Smoothing is skipped once the requested components
    cover the whole residual rank, so a full-rank basis stays lossless.

    Uses the N x N weighted Gram matrix so the cost does not depend on the
    grid size.
    """
    eigenvalues, eigenvectors = np.linalg.eigh(gram)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    keep = eigenvalues > (COMPONENT_TOL * scale) ** 2
    rank = int(keep.sum())
    eigenvalues = eigenvalues[keep][:n_components]
    eigenvectors = eigenvectors[:, keep][:, :n_components]
    if eigenvalues.size == 0:
        return np.zeros((0, residuals.shape[1]))

    components = (eigenvectors.T @ residuals) / np.sqrt(eigenvalues)[:, None]
    if window > 1 and n_components < rank:
        components = uniform_filter1d(components, size=window, axis=1, mode="nearest")
    return _orthonormalize(components, fixed, w, scale=1.0)


class QuantletBuilder:
    """Fits quantlet bases on a quantile matrix, with leave-one-out checks."""

    def __init__(self, q_matrix: np.ndarray, k_max: int = 30, smoothing_window: int = 5):
        q_matrix = np.asarray(q_matrix, dtype=float)
        if q_matrix.ndim != 2 or q_matrix.shape[0] < 3:
            raise ValueError("a quantlet basis needs at least three subjects")
        if k_max < N_GAUSSIAN:
            raise ValueError("k_max must be at least 2")
        if not np.all(np.diff(q_matrix, axis=1) >= -MONOTONE_TOL):
            raise NonMonotoneQuantileError("quantlet training rows must be non-decreasing")

        self.q_matrix = q_matrix
        self.k_max = int(k_max)
        self.window = int(smoothing_window)
        self.n = q_matrix.shape[1]
        self.w = grid_weights(self.n)
        self.fixed = gaussian_elements(self.n)
        self.scale = max(float(np.sqrt(np.mean(q_matrix ** 2 @ self.w))), 1.0)

        fixed_coefficients = q_matrix @ (self.w[:, None] * self.fixed.T)
        self.residuals = q_matrix - fixed_coefficients @ self.fixed
        weighted = self.residuals * np.sqrt(self.w)
        self.gram = weighted @ weighted.T

    def basis_rows(self, exclude: Optional[int] = None) -> np.ndarray:
        """All k_max rows (or fewer if the residual rank is smaller)."""
        if exclude is None:
            residuals, gram = self.residuals, self.gram
        else:
            keep = np.arange(self.q_matrix.shape[0]) != exclude
            residuals, gram = self.residuals[keep], self.gram[np.ix_(keep, keep)]
        extra = _residual_components(
            residuals, gram, self.k_max - N_GAUSSIAN, self.fixed, self.w, self.window, self.scale,
        )
        return np.vstack([self.fixed, extra])

    def loo_ccc_curve(self, show_progress: bool = False) -> np.ndarray:
        """
        Minimum leave-one-out CCC for every K in 2..k_max.

        Returns:
            Array indexed by K - 2
        """
        n_subjects = self.q_matrix.shape[0]
        ccc = np.ones((n_subjects, self.k_max - N_GAUSSIAN + 1))
        for i in tqdm(range(n_subjects), desc="LOO quantlets", disable=not show_progress):
            rows = self.basis_rows(exclude=i)
            q = self.q_matrix[i]
            partial = np.cumsum((rows @ (self.w * q))[:, None] * rows, axis=0)
            for k in range(N_GAUSSIAN, self.k_max + 1):
                approx = partial[min(k, rows.shape[0]) - 1]
                ccc[i, k - N_GAUSSIAN] = concordance(q, approx)
        return ccc.min(axis=0)

    def build(
        self,
        ccc_min: float = 0.99,
        k_override: Optional[int] = None,
        evaluate_loo: bool = True,
        show_progress: bool = False,
    ) -> QuantletBasis:
        rows = self.basis_rows()
        if k_override is not None:
            k = max(N_GAUSSIAN, min(int(k_override), rows.shape[0]))
            min_ccc = float(self.loo_ccc_curve(show_progress)[k - N_GAUSSIAN]) if evaluate_loo else float("nan")
        else:
            curve = self.loo_ccc_curve(show_progress)
            reached = np.flatnonzero(curve >= ccc_min)
            if reached.size == 0:
                best = float(curve.max())
                raise QuantletBasisError(
                    f"LOO CCC {ccc_min} not reached with k_max={self.k_max}; best {best:.6f}",
                    best_ccc=best,
                )
            k = int(reached[0]) + N_GAUSSIAN
            min_ccc = float(curve[k - N_GAUSSIAN])
            if k > rows.shape[0]:
                k = rows.shape[0]

        logger.info(
            f"Quantlet basis K_Q={k} (min LOO CCC {min_ccc:.6f})",
            extra={"k_q": k, "min_loo_ccc": min_ccc, "n_subjects": self.q_matrix.shape[0]}
        )
        return QuantletBasis(
            psi=rows[:k],
            min_loo_ccc=min_ccc,
            ccc_min=ccc_min,
            smoothing_window=self.window,
        )


def build_quantlet_basis(
    q_matrix: np.ndarray,
    ccc_min: float = 0.99,
    k_max: int = 30,
    smoothing_window: int = 5,
    k_override: Optional[int] = None,
    evaluate_loo: bool = True,
    show_progress: bool = False,
) -> QuantletBasis:
    """
    Learn a quantlet basis from an N x n Box-Cox-scale quantile matrix.

    K_Q is the smallest K whose minimum leave-one-out CCC reaches ccc_min,
    unless k_override fixes it.

    Raises:
        QuantletBasisError: If ccc_min is not reached by k_max
    """
    builder = QuantletBuilder(q_matrix, k_max=k_max, smoothing_window=smoothing_window)
    return builder.build(ccc_min, k_override, evaluate_loo, show_progress)


def loo_ccc(q_matrix: np.ndarray, k: int, smoothing_window: int = 5) -> float:
    """Minimum over subjects of the CCC between Q_i and its leave-one-out reconstruction with K elements."""
    if k < N_GAUSSIAN:
        raise ValueError("K must be at least 2")
    builder = QuantletBuilder(q_matrix, k_max=k, smoothing_window=smoothing_window)
    return float(builder.loo_ccc_curve()[-1])


def project(q: QuantileFunction, basis: QuantletBasis) -> np.ndarray:
    """Quantlet coefficients Q* by weighted inner products."""
    return basis.psi @ (basis.weights * q.values)


def reconstruct(q_star: np.ndarray, basis: QuantletBasis,
                scale: QuantileScale = QuantileScale.BOXCOX) -> QuantileFunction:
    """Grid values of sum_k Q*_k psi_k; monotonicity is not enforced."""
    return QuantileFunction(np.asarray(q_star, dtype=float) @ basis.psi, scale)


def project_matrix(q_matrix: np.ndarray, basis: QuantletBasis) -> np.ndarray:
    """N x K coefficient matrix."""
    return np.asarray(q_matrix, dtype=float) @ (basis.weights[:, None] * basis.psi.T)


def reconstruct_matrix(coefficients: np.ndarray, basis: QuantletBasis) -> np.ndarray:
    return np.asarray(coefficients, dtype=float) @ basis.psi
