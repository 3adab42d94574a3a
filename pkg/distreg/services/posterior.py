"""
Posterior functional inference.
Monotone projection of quantile draws, distributional summaries, joint
credible bands, SimBaS scores and the induced residual covariance.
"""
import logging
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import isotonic_regression, nnls

from distreg.exceptions import NonMonotoneQuantileError, ProjectionError, ScaleMismatchError
from distreg.models.quantile import MONOTONE_TOL, BoxCoxTransform, QuantileDraws, QuantileFunction, QuantileScale
from distreg.models.quantlet import QuantletBasis
from distreg.models.regression import PosteriorDraws
from distreg.models.summary import MVPA_CUTPOINT, CredibleBands, FunctionalSummary
from distreg.utils.grid import WINDOW_MINUTES, grid_integral, grid_weights, quantile_grid
from distreg.utils.splines import ispline_basis

logger = logging.getLogger(__name__)

KKT_TOL = 1e-10
MIN_DRAWS = 100


class MonotoneProjector:
    """
    Least-squares projection onto non-decreasing I-spline expansions.

    Two expansions are tried. The smooth one uses `n_isplines` cubic
    I-splines with non-negative coefficients and a free offset, profiled out
    by weighted centering before the non-negative solve. The exact one uses
    degree-0 I-splines with a knot at every grid point, whose non-negative
    cone is every non-decreasing grid vector, so its argmin is the weighted
    isotonic fit. The smooth fit is kept only while its distance to the draw
    is no larger than that of the cumulative-max envelope.
    """

    def __init__(self, n: int, n_isplines: int = 20, kkt_tol: float = KKT_TOL):
        self.n = int(n)
        self.n_isplines = int(n_isplines)
        self.kkt_tol = kkt_tol
        self.weights = grid_weights(self.n)
        self.basis = ispline_basis(quantile_grid(self.n), self.n_isplines)
        self.basis_mean = self.weights @ self.basis
        sqrt_w = np.sqrt(self.weights)[:, None]
        self.design = sqrt_w * (self.basis - self.basis_mean)
        self.design_norm = float(np.linalg.norm(self.design, 2))

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        """Weighted grid L2 distance."""
        return float(np.sqrt(self.weights @ (np.asarray(a) - np.asarray(b)) ** 2))

    def smooth_fit(self, values: np.ndarray) -> np.ndarray:
        """Cubic I-spline least squares with non-negative slopes."""
        offset_mean = float(self.weights @ values)
        target = np.sqrt(self.weights) * (values - offset_mean)
        coefficients, _ = nnls(self.design, target, maxiter=50 * self.n_isplines)

        gradient = self.design.T @ (self.design @ coefficients - target)
        active = coefficients > 0
        violation = max(
            float(np.max(np.abs(gradient[active]), initial=0.0)),
            float(np.max(-gradient[~active], initial=0.0)),
        )
        scale = self.design_norm * (self.design_norm * float(np.linalg.norm(coefficients)) + float(np.linalg.norm(target)))
        if violation > self.kkt_tol * max(scale, 1.0):
            raise ProjectionError("monotone projection did not converge", residual=violation)

        fitted = offset_mean + (self.basis - self.basis_mean) @ coefficients
        return np.maximum.accumulate(fitted)

    def exact_fit(self, values: np.ndarray) -> np.ndarray:
        """
        Weighted isotonic fit, checked against the KKT conditions of the
        step expansion: weighted residuals sum to zero, every tail sum is
        non-positive and tail sums vanish where the fit steps up.
        """
        fitted = isotonic_regression(values, weights=self.weights).x
        residual = self.weights * (values - fitted)
        tails = np.cumsum(residual[::-1])[::-1]
        steps = np.flatnonzero(np.diff(fitted) > 0) + 1

        violation = max(
            abs(float(tails[0])),
            float(np.max(tails[1:], initial=0.0)),
            float(np.max(np.abs(tails[steps]), initial=0.0)),
        )
        if violation > self.kkt_tol * max(float(np.abs(values).max()), 1.0) * self.n:
            raise ProjectionError("isotonic projection failed its optimality check", residual=violation)
        return np.maximum.accumulate(fitted)

    def project_values(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if np.all(np.diff(values) >= -MONOTONE_TOL):
            return values

        envelope_distance = self.distance(values, np.maximum.accumulate(values))
        smooth = self.smooth_fit(values)
        if self.distance(values, smooth) <= envelope_distance:
            return smooth
        return self.exact_fit(values)

    def project_matrix(self, matrix: np.ndarray) -> Tuple[np.ndarray, float]:
        """
        Project every row.

        Returns:
            (projected rows, fraction of rows that needed projection)
        """
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        needs = np.any(np.diff(matrix, axis=1) < -MONOTONE_TOL, axis=1)
        projected = matrix.copy()
        for row in np.flatnonzero(needs):
            projected[row] = self.project_values(matrix[row])
        rate = float(needs.mean()) if len(needs) else 0.0
        return projected, rate


def monotone_project(q_draw: QuantileFunction, projector: Optional[MonotoneProjector] = None) -> QuantileFunction:
    """Return q_draw unchanged if non-decreasing, else its I-spline projection."""
    projector = projector or MonotoneProjector(q_draw.n)
    if q_draw.is_monotone():
        return q_draw
    return QuantileFunction(projector.project_values(q_draw.values), q_draw.scale)


def project_draws(draws: QuantileDraws, projector: Optional[MonotoneProjector] = None) -> QuantileDraws:
    """Monotone projection of every draw, logging the share that needed it."""
    projector = projector or MonotoneProjector(draws.n)
    projected, rate = projector.project_matrix(draws.values)
    logger.info(
        f"Projected {rate:.2%} of {len(draws)} draws onto monotone functions",
        extra={"projection_rate": rate, "n_draws": len(draws)}
    )
    return QuantileDraws(projected, draws.scale)


def probability_below(values: np.ndarray, target: float) -> float:
    """
    sup{p : Q(p) < target} on the grid, interpolated linearly between the
    two grid points that bracket the target.
    """
    values = np.asarray(values, dtype=float)
    grid = quantile_grid(values.size)
    if values[0] >= target:
        return 0.0
    if values[-1] < target:
        return 1.0
    j = int(np.searchsorted(values, target, side="left"))
    v0, v1 = values[j - 1], values[j]
    p0, p1 = grid[j - 1], grid[j]
    if v1 == v0:
        return float(p1)
    return float(p0 + (target - v0) / (v1 - v0) * (p1 - p0))


def summarize_draw(
    q_draw: QuantileFunction,
    transform: BoxCoxTransform,
    thresholds: Iterable[float] = (MVPA_CUTPOINT,),
) -> FunctionalSummary:
    """
    Distributional summaries of one monotone Box-Cox-scale quantile function.

    Raises:
        NonMonotoneQuantileError: If the draw was not projected first
    """
    if q_draw.scale is not QuantileScale.BOXCOX:
        raise ScaleMismatchError("summaries are computed from boxcox-scale draws")
    if not q_draw.is_monotone():
        raise NonMonotoneQuantileError("project draws onto monotone functions before summarizing")

    values = q_draw.values
    deltas = sorted(set(float(d) for d in thresholds) | {MVPA_CUTPOINT})
    p_delta = {d: probability_below(values, float(transform.forward(d))) for d in deltas}
    mvpa = 1.0 - p_delta[MVPA_CUTPOINT]
    return FunctionalSummary(
        mu_y=float(grid_integral(values)),
        mu_count=float(grid_integral(transform.inverse(values))),
        p_delta=p_delta,
        zero_prop=probability_below(values, 0.0),
        mvpa_prop=mvpa,
        mvpa_minutes=mvpa * WINDOW_MINUTES,
    )


def summarize_draws(
    draws: QuantileDraws,
    transform: BoxCoxTransform,
    thresholds: Iterable[float] = (MVPA_CUTPOINT,),
) -> pd.DataFrame:
    """Tidy per-draw summaries: draw, functional, value."""
    thresholds = list(thresholds)
    records = []
    for r, values in enumerate(draws.values):
        summary = summarize_draw(QuantileFunction(values, draws.scale), transform, thresholds)
        for record in summary.as_records():
            records.append({"draw": r, **record})
    return pd.DataFrame(records, columns=["draw", "functional", "value"])


def aggregate_summaries(tidy: pd.DataFrame, by: Sequence[str] = ()) -> pd.DataFrame:
    """Posterior mean, sd and 95% interval per functional."""
    keys = [*by, "functional"]
    grouped = tidy.groupby(keys, sort=False)["value"]
    table = grouped.agg(
        mean="mean",
        sd=lambda v: float(np.std(v)),
        q025=lambda v: float(np.quantile(v, 0.025)),
        q975=lambda v: float(np.quantile(v, 0.975)),
    )
    return table.reset_index()


def _standardized(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    mean = theta.mean(axis=0)
    sd = theta.std(axis=0)
    varying = sd > 0
    deviation = np.zeros_like(theta)
    deviation[:, varying] = np.abs(theta[:, varying] - mean[varying]) / sd[varying]
    return mean, sd, varying, deviation


def joint_bands(theta_draws: np.ndarray, alpha: float = 0.05) -> CredibleBands:
    """
    Simultaneous credible band mean +/- q SD, q the (1 - alpha) quantile of
    the maximum standardized deviation over the grid. Points with zero
    posterior SD are left out of the maximum and collapse to the mean.
    Pointwise intervals use the same standardized form per grid point.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    theta_draws = np.atleast_2d(np.asarray(theta_draws, dtype=float))
    if theta_draws.shape[0] < MIN_DRAWS:
        logger.warning(
            f"Credible bands from only {theta_draws.shape[0]} draws",
            extra={"n_draws": theta_draws.shape[0]}
        )

    mean, sd, varying, deviation = _standardized(theta_draws)
    max_deviation = deviation.max(axis=1) if varying.any() else np.zeros(theta_draws.shape[0])
    critical = float(np.quantile(max_deviation, 1.0 - alpha))
    pointwise = np.quantile(deviation, 1.0 - alpha, axis=0)

    return CredibleBands(
        mean=mean,
        sd=sd,
        lower=mean - critical * sd,
        upper=mean + critical * sd,
        pointwise_lower=mean - pointwise * sd,
        pointwise_upper=mean + pointwise * sd,
        critical_value=critical,
        alpha=alpha,
    )


def simbas(theta_draws: np.ndarray) -> np.ndarray:
    """
    Simultaneous band scores: per grid point, the smallest alpha at which
    the joint band excludes zero, floored at 1/R.
    """
    theta_draws = np.atleast_2d(np.asarray(theta_draws, dtype=float))
    n_draws = theta_draws.shape[0]
    mean, sd, varying, deviation = _standardized(theta_draws)
    max_deviation = deviation.max(axis=1) if varying.any() else np.zeros(n_draws)

    effect = np.zeros_like(mean)
    effect[varying] = np.abs(mean[varying]) / sd[varying]
    effect[~varying & (mean != 0)] = np.inf

    scores = (max_deviation[:, None] >= effect[None, :]).mean(axis=0)
    scores = np.maximum(scores, 1.0 / n_draws)
    scores[mean == 0] = 1.0
    return scores


def residual_covariance_surface(
    draws: PosteriorDraws,
    basis: QuantletBasis,
    grid_size: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Induced covariance of curve-level residuals, psi' diag(E[s]) psi.

    Returns:
        (probabilities, surface), subsampled to grid_size points if given
    """
    s_mean = draws.s.mean(axis=0)
    index = np.arange(basis.n)
    if grid_size is not None and grid_size < basis.n:
        index = np.unique(np.round(np.linspace(0, basis.n - 1, grid_size)).astype(int))
    psi = basis.psi[:, index]
    surface = psi.T @ (s_mean[:, None] * psi)
    return quantile_grid(basis.n)[index], 0.5 * (surface + surface.T)


def quantile_density(values: np.ndarray, n_points: int = 200) -> Tuple[np.ndarray, np.ndarray]:
    """
    Density implied by a monotone quantile function, by numerically
    differentiating its inverse on an even grid of support values.
    """
    values = np.asarray(values, dtype=float)
    grid = quantile_grid(values.size)
    lo, hi = float(values[0]), float(values[-1])
    if hi <= lo:
        return np.array([lo]), np.array([np.inf])
    support = np.linspace(lo, hi, n_points)
    increasing = np.concatenate([[True], np.diff(values) > 0])
    cdf = np.interp(support, values[increasing], grid[increasing])
    return support, np.clip(np.gradient(cdf, support), 0.0, None)


def band_table(label: Dict[str, np.ndarray], bands: CredibleBands, scores: np.ndarray) -> pd.DataFrame:
    """Plot-ready rows: label columns, estimate, sd, bands, simbas and flag."""
    frame = pd.DataFrame(label)
    frame["estimate"] = bands.mean
    frame["sd"] = bands.sd
    frame["lower"] = bands.lower
    frame["upper"] = bands.upper
    frame["pointwise_lower"] = bands.pointwise_lower
    frame["pointwise_upper"] = bands.pointwise_upper
    frame["simbas"] = scores
    frame["flag"] = scores < 0.05
    return frame
