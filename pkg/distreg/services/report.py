"""
Plot-ready report bundles.

Covariate contrast surfaces with SimBaS flags, missingness what-if
quantiles and densities, and the simulation ISE/bias tables. Every bundle is
a CSV; an empty request still writes the header.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd

from distreg.config import Settings
from distreg.data.artifacts import ArtifactStore
from distreg.exceptions import DesignError
from distreg.models.missingness import FpcBasis
from distreg.models.quantile import QuantileDraws
from distreg.models.quantlet import QuantletBasis
from distreg.models.regression import DesignMapper, PosteriorDraws
from distreg.services import missprof, posterior, qfr
from distreg.services.pipeline import load_fitted_model, load_fpc_basis, load_quantlet_basis, load_transform
from distreg.utils.grid import N_BINS, WINDOW_START_HOUR, quantile_grid

logger = logging.getLogger(__name__)

BAND_COLUMNS = [
    "estimate", "sd", "lower", "upper", "pointwise_lower", "pointwise_upper", "simbas", "flag",
]
SLICE_COLUMNS = ["covariate", "p", "value", *BAND_COLUMNS]
WHATIF_QUANTILE_COLUMNS = ["pattern", "start_hour", "p", "estimate", "lower", "upper", "estimate_count"]
WHATIF_DENSITY_COLUMNS = ["pattern", "start_hour", "count", "density"]
WHATIF_SUMMARY_COLUMNS = ["pattern", "start_hour", "functional", "mean", "sd", "q025", "q975"]
ISE_COLUMNS = ["age", "sex", "method", "median", "mean"]
BIAS_COLUMNS = ["age", "sex", "method", "bias", "replicate_se", "truth_se_bound"]
REFERENCE_PATTERN = "none"
HOURS_PER_BIN = 0.5


def covariate_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Evenly stepped values from lo to hi inclusive."""
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 10)


def contrast_indices(n: int, grid_size: int, probs: Sequence[float]) -> np.ndarray:
    """Subsampled grid indices plus the indices nearest to the requested slice probabilities."""
    grid = quantile_grid(n)
    index = np.round(np.linspace(0, n - 1, min(grid_size, n))).astype(int)
    nearest = [int(np.argmin(np.abs(grid - p))) for p in probs]
    return np.unique(np.concatenate([index, nearest]))


def block_pattern(start_hour: float, block_hours: float, rate: float) -> np.ndarray:
    """Missing-rate profile with `rate` in the half-hour bins of one block."""
    starts = WINDOW_START_HOUR + HOURS_PER_BIN * np.arange(N_BINS)
    inside = (starts >= start_hour - 1e-9) & (starts < start_hour + block_hours - 1e-9)
    return np.where(inside, rate, 0.0)


def default_block_starts(block_hours: float) -> List[float]:
    """Back-to-back blocks covering the 6:00-23:30 window."""
    end = WINDOW_START_HOUR + N_BINS * HOURS_PER_BIN
    count = int(np.floor((end - WINDOW_START_HOUR) / block_hours + 1e-9))
    return [WINDOW_START_HOUR + block_hours * i for i in range(count)]


class ReportBuilder:
    """Builds every report bundle from the fitted model on disk."""

    def __init__(self, settings: Settings, store: ArtifactStore):
        self.settings = settings
        self.inference = settings.inference
        self.store = store

    def build(self) -> None:
        self.store.require("summaries.csv")
        draws, mapper = load_fitted_model(self.store)
        basis = load_quantlet_basis(self.store)
        projector = posterior.MonotoneProjector(basis.n, self.inference.n_isplines)

        self.write_contrasts(draws, basis, mapper, projector)
        self.write_whatif(draws, basis, mapper, projector, load_fpc_basis(self.store))
        self.write_evaluation_tables()

    def _projected(self, draws: PosteriorDraws, basis: QuantletBasis, mapper: DesignMapper,
                   projector: posterior.MonotoneProjector, x_new: Sequence[float],
                   m_star: np.ndarray) -> QuantileDraws:
        predicted = qfr.predict_quantile(draws, basis, x_new, m_star, mapper=mapper)
        values, _ = projector.project_matrix(predicted.values)
        return QuantileDraws(values, predicted.scale)

    def contrast_draws(
        self,
        draws: PosteriorDraws,
        basis: QuantletBasis,
        mapper: DesignMapper,
        projector: posterior.MonotoneProjector,
        position: int,
        values: np.ndarray,
        reference: float,
        index: np.ndarray,
    ) -> np.ndarray:
        """
        Q(x) - Q(x_ref) per draw along one covariate, M* = 0.

        Returns:
            Array (R, len(values), len(index))
        """
        m_zero = np.zeros(draws.k_m)
        base_x = list(self.inference.reference_x)
        base_x[position] = reference
        base = self._projected(draws, basis, mapper, projector, base_x, m_zero).values[:, index]

        out = np.empty((draws.n_draws, len(values), len(index)))
        for i, value in enumerate(values):
            x_new = list(self.inference.reference_x)
            x_new[position] = value
            out[:, i, :] = self._projected(draws, basis, mapper, projector, x_new, m_zero).values[:, index] - base
        return out

    def write_contrasts(self, draws, basis, mapper, projector) -> None:
        inf = self.inference
        requests: List[Tuple[str, int, np.ndarray, float]] = []
        if inf.contrasts:
            requests = [
                ("age", 4, covariate_grid(mapper.age_spline.lo, mapper.age_spline.hi, inf.age_step),
                 inf.age_reference),
                ("bmi", 5, covariate_grid(mapper.bmi_spline.lo, mapper.bmi_spline.hi, inf.bmi_step),
                 inf.bmi_reference),
            ]

        index = contrast_indices(basis.n, inf.contrast_grid, inf.contrast_probs)
        probs = quantile_grid(basis.n)[index]
        slices = []
        written = set()
        for name, position, values, reference in requests:
            theta = self.contrast_draws(draws, basis, mapper, projector, position, values, reference, index)
            flat = theta.reshape(draws.n_draws, -1)
            bands = posterior.joint_bands(flat, inf.alpha)
            table = posterior.band_table(
                {name: np.repeat(values, len(index)), "p": np.tile(probs, len(values))},
                bands,
                posterior.simbas(flat),
            )
            self.store.write_csv(f"report_contrast_{name}.csv", table)
            written.add(name)

            for p in inf.contrast_probs:
                column = int(np.argmin(np.abs(probs - p)))
                along = theta[:, :, column]
                slice_table = posterior.band_table(
                    {"covariate": [name] * len(values), "p": [float(probs[column])] * len(values), "value": values},
                    posterior.joint_bands(along, inf.alpha),
                    posterior.simbas(along),
                )
                slices.append(slice_table)
            logger.info(
                f"Contrast surface over {name}: {int(table['flag'].sum())} of {len(table)} points flagged",
                extra={"covariate": name, "points": len(table), "flagged": int(table["flag"].sum())}
            )

        for name in ("age", "bmi"):
            if name not in written:
                self.store.write_csv(f"report_contrast_{name}.csv", pd.DataFrame(columns=[name, "p", *BAND_COLUMNS]))
        slice_frame = pd.concat(slices, ignore_index=True) if slices else pd.DataFrame(columns=SLICE_COLUMNS)
        self.store.write_csv("report_contrast_slices.csv", slice_frame[SLICE_COLUMNS])

    def patterns(self) -> List[Tuple[str, float, np.ndarray]]:
        """The pi = 0 reference followed by one block pattern per start hour."""
        inf = self.inference
        starts = default_block_starts(inf.whatif_block_hours) if inf.whatif_start_hours is None \
            else list(inf.whatif_start_hours)
        patterns = [(REFERENCE_PATTERN, float("nan"), np.zeros(N_BINS))]
        for start in starts:
            label = f"{start:g}-{start + inf.whatif_block_hours:g}"
            patterns.append((label, float(start), block_pattern(start, inf.whatif_block_hours, inf.whatif_rate)))
        return patterns

    def write_whatif(self, draws, basis, mapper, projector, fpc: FpcBasis) -> None:
        inf = self.inference
        transform = load_transform(self.store)
        grid = quantile_grid(basis.n)
        quantile_frames, density_frames, summary_frames = [], [], []

        for label, start, pi in self.patterns():
            profile = missprof.profile_from_rates(pi, fpc.n_subjects)
            m_star = missprof.project_scores(profile, fpc) if draws.k_m else np.zeros(0)
            if m_star.shape != (draws.k_m,):
                raise DesignError(f"FPC basis has {fpc.k} components, draws have {draws.k_m}")
            q = self._projected(draws, basis, mapper, projector, inf.reference_x, m_star)

            bands = posterior.joint_bands(q.values, inf.alpha)
            quantile_frames.append(pd.DataFrame({
                "pattern": label,
                "start_hour": start,
                "p": grid,
                "estimate": bands.mean,
                "lower": bands.lower,
                "upper": bands.upper,
                "estimate_count": transform.inverse(bands.mean),
            }))

            support, density = posterior.quantile_density(transform.inverse(bands.mean), inf.density_points)
            density_frames.append(pd.DataFrame({
                "pattern": label, "start_hour": start, "count": support, "density": density,
            }))

            summary = posterior.aggregate_summaries(posterior.summarize_draws(q, transform, inf.thresholds))
            summary.insert(0, "start_hour", start)
            summary.insert(0, "pattern", label)
            summary_frames.append(summary)

        self.store.write_csv("report_whatif_quantiles.csv",
                             pd.concat(quantile_frames, ignore_index=True)[WHATIF_QUANTILE_COLUMNS])
        self.store.write_csv("report_whatif_densities.csv",
                             pd.concat(density_frames, ignore_index=True)[WHATIF_DENSITY_COLUMNS])
        self.store.write_csv("report_whatif_summaries.csv",
                             pd.concat(summary_frames, ignore_index=True)[WHATIF_SUMMARY_COLUMNS])

    def write_evaluation_tables(self) -> None:
        """Copy evaluation summaries into the report; header only when no evaluation was run."""
        for source, target, columns in (
            ("evaluation_ise_summary.csv", "report_ise.csv", ISE_COLUMNS),
            ("evaluation_bias_summary.csv", "report_bias.csv", BIAS_COLUMNS),
        ):
            if self.store.exists(source):
                frame = self.store.read_csv(source)[columns]
            else:
                frame = pd.DataFrame(columns=columns)
            self.store.write_csv(target, frame)
