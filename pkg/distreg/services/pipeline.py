"""
Pipeline orchestration.

Every subcommand reads its upstream artifacts from the output directory,
writes its own artifacts there and finishes with a run manifest.
"""
import hashlib
import logging
from typing import Callable, Dict, List, Tuple

import numpy as np
import pandas as pd

from distreg.config import Settings
from distreg.data.artifacts import ArtifactStore
from distreg.data.importers.epochs import EpochCsvImporter, write_epoch_csv
from distreg.exceptions import DependencyMissingError, DesignError
from distreg.models.missingness import FpcBasis
from distreg.models.quantile import BoxCoxTransform, QuantileDraws
from distreg.models.quantlet import QuantletBasis
from distreg.models.regression import DesignMapper, PosteriorDraws
from distreg.schemas.artifacts import FpcBasisSchema, MissingnessSidecar, QuantileSidecar, QuantletSidecar
from distreg.services import distq, evaluation, ingest, missprof, posterior, qfr, quantlets, simgen
from distreg.utils.grid import N_BINS, quantile_grid
from distreg.utils.logging import log_stage

logger = logging.getLogger(__name__)

SIMULATED_CORPUS = "simulated_epochs.csv"
ALL_STAGES = ("preprocess", "basis", "fit", "infer", "evaluate", "report")


def config_digest(settings: Settings) -> str:
    """Content hash of the resolved configuration."""
    return hashlib.sha256(settings.model_dump_json().encode("utf-8")).hexdigest()


def bin_columns(prefix: str) -> List[str]:
    return [f"{prefix}_{b:02d}" for b in range(N_BINS)]


def load_transform(store: ArtifactStore) -> BoxCoxTransform:
    sidecar = QuantileSidecar.model_validate(store.read_json("quantiles.json"))
    return BoxCoxTransform(lam=sidecar.lam, epsilon=sidecar.epsilon)


def load_quantlet_basis(store: ArtifactStore) -> QuantletBasis:
    sidecar = QuantletSidecar.model_validate(store.read_json("quantlet_basis.json"))
    _, psi = store.read_matrix("quantlet_basis.csv", id_column="quantlet")
    return QuantletBasis(
        psi=psi,
        min_loo_ccc=float("nan") if sidecar.min_loo_ccc is None else sidecar.min_loo_ccc,
        ccc_min=sidecar.ccc_min,
        smoothing_window=sidecar.smoothing_window,
    )


def load_fpc_basis(store: ArtifactStore) -> FpcBasis:
    schema = FpcBasisSchema.model_validate(store.read_json("fpca_basis.json"))
    return FpcBasis(
        mean=np.asarray(schema.mean),
        components=np.asarray(schema.components, dtype=float).reshape(schema.k, len(schema.mean)),
        eigenvalues=np.asarray(schema.eigenvalues),
        fve=schema.fve,
        n_subjects=schema.n_subjects,
        total_variance=schema.total_variance,
    )


def load_fitted_model(store: ArtifactStore) -> Tuple[PosteriorDraws, DesignMapper]:
    draws = store.read_draws("qfr")
    design = draws.metadata.get("design")
    if design is None:
        raise DependencyMissingError("qfr_draws.json")
    return draws, DesignMapper.from_dict(design)


def _check_aligned(expected: List[str], actual: List[str], artifact: str) -> None:
    if list(expected) != list(actual):
        raise DesignError(f"{artifact} is not row-aligned with the cohort")


class Pipeline:
    """Runs subcommands against one output directory."""

    def __init__(self, settings: Settings, store: ArtifactStore):
        self.settings = settings
        self.store = store
        self.digest = config_digest(settings)
        self.stages: Dict[str, Callable[[], None]] = {
            "preprocess": self.preprocess,
            "basis": self.basis,
            "fit": self.fit,
            "infer": self.infer,
            "simulate": self.simulate,
            "evaluate": self.evaluate,
            "report": self.report,
        }

    def run(self, subcommand: str) -> None:
        """Run one subcommand, or every stage in order for "all"."""
        names = ALL_STAGES if subcommand == "all" else (subcommand,)
        for name in names:
            self.store.begin()
            with log_stage(name, output_dir=str(self.store.root)):
                self.stages[name]()
            self.store.write_manifest(name, self.settings.seed, self.digest)

    def _input_csv(self):
        path = self.settings.paths.input_csv
        if path is None:
            path = self.store.path(SIMULATED_CORPUS)
        if not path.is_file():
            raise DependencyMissingError(path.name if self.settings.paths.input_csv is None else str(path))
        self.store.track_input(path)
        return path

    def preprocess(self) -> None:
        pre = self.settings.preprocessing
        importer = EpochCsvImporter(show_progress=self.settings.show_progress)
        cohort = importer.import_file(self._input_csv())
        cohort = ingest.apply_nonwear_cohort(cohort, pre.nonwear_min_run)
        cohort = ingest.filter_valid(cohort, pre.min_wear_epochs, pre.min_days)

        quantiles = distq.cohort_quantiles(cohort, pre.n_grid, self.settings.show_progress)
        transform = distq.fit_boxcox(distq.frechet_mean(quantiles), pre.epsilon, pre.lambda_grid_size)
        boxcox = [distq.apply_boxcox(q, transform) for q in quantiles]
        ids = list(cohort.subject_ids)

        self.store.write_matrix("quantiles_count.csv", distq.quantile_matrix(quantiles), ids, "q")
        self.store.write_matrix("quantiles_boxcox.csv", distq.quantile_matrix(boxcox), ids, "q")
        self.store.write_json("quantiles.json", QuantileSidecar(
            lam=transform.lam, epsilon=transform.epsilon, n=pre.n_grid, n_subjects=len(ids), subject_ids=ids,
        ))
        self.store.write_csv("covariates.csv", cohort.covariate_frame())
        exclusions = pd.DataFrame(ingest.exclusion_rows(cohort), columns=["subject_id", "day", "reason"])
        exclusions["day"] = exclusions["day"].astype("Int64")
        self.store.write_csv("exclusions.csv", exclusions)

        profiles = missprof.cohort_profiles(cohort)
        frame = pd.concat([
            pd.DataFrame({"subject_id": ids, "n_days": [p.n_days for p in profiles]}),
            pd.DataFrame(np.vstack([p.pi for p in profiles]), columns=bin_columns("pi")),
            pd.DataFrame(np.vstack([p.m for p in profiles]), columns=bin_columns("m")),
        ], axis=1)
        self.store.write_csv("missingness_profiles.csv", frame)
        self.store.write_json("missingness.json", MissingnessSidecar(cohort_size=len(cohort)))

    def basis(self) -> None:
        cfg = self.settings
        ids, q_matrix = self.store.read_matrix("quantiles_boxcox.csv")
        profiles = self.store.read_csv("missingness_profiles.csv", dtype={"subject_id": str})
        _check_aligned(ids, profiles["subject_id"].tolist(), "missingness_profiles.csv")
        m_matrix = profiles[bin_columns("m")].to_numpy(dtype=float)

        fpc = missprof.fit_fpca(m_matrix, cfg.fpca.fve, cfg.fpca.k_override)
        self.store.write_json("fpca_basis.json", FpcBasisSchema(
            mean=fpc.mean.tolist(),
            components=fpc.components.tolist(),
            eigenvalues=fpc.eigenvalues.tolist(),
            fve=fpc.fve,
            n_subjects=fpc.n_subjects,
            total_variance=fpc.total_variance,
            k=fpc.k,
        ))
        self.store.write_matrix("fpca_scores.csv", missprof.score_matrix(m_matrix, fpc), ids, "score")

        basis = quantlets.build_quantlet_basis(
            q_matrix,
            ccc_min=cfg.basis.ccc_min,
            k_max=cfg.basis.k_max,
            smoothing_window=cfg.basis.smoothing_window,
            k_override=cfg.basis.k_override,
            evaluate_loo=cfg.basis.evaluate_loo,
            show_progress=cfg.show_progress,
        )
        self.store.write_json("quantlet_basis.json", QuantletSidecar(
            k=basis.k,
            n=basis.n,
            min_loo_ccc=None if np.isnan(basis.min_loo_ccc) else basis.min_loo_ccc,
            ccc_min=basis.ccc_min,
            smoothing_window=basis.smoothing_window,
        ))
        labels = [f"psi{k + 1}" for k in range(basis.k)]
        self.store.write_matrix("quantlet_basis.csv", basis.psi, labels, "p", id_column="quantlet")
        self.store.write_matrix("quantlet_coefficients.csv", quantlets.project_matrix(q_matrix, basis), ids, "c")

    def fit(self) -> None:
        cfg = self.settings
        model = cfg.model
        covariates = self.store.read_csv("covariates.csv", dtype={"subject_id": str})
        ids, q_star = self.store.read_matrix("quantlet_coefficients.csv")
        score_ids, scores = self.store.read_matrix("fpca_scores.csv")
        _check_aligned(covariates["subject_id"].tolist(), ids, "quantlet_coefficients.csv")
        _check_aligned(ids, score_ids, "fpca_scores.csv")

        design = qfr.build_design(covariates, scores, model.n_knots)
        if not model.random_effects:
            design = design.without_random_effects()
        fit_design = design if model.missingness_adjustment else design.without_missingness()

        draws = qfr.fit_qfr_gibbs(
            q_star, fit_design, model.mcmc, model.priors,
            seed=cfg.seed, workers=cfg.workers, show_progress=cfg.show_progress,
        )
        self.store.write_draws("qfr", draws)
        self.store.write_csv("qfr_fixed_effects.csv", qfr.fixed_effect_summary(draws))

        if model.missingness_regression and design.k_m > 0:
            missreg = qfr.fit_missingness_regression(
                design.m_star, design, model.mcmc, model.priors,
                seed=simgen.derive_seed(cfg.seed, "missreg"), workers=cfg.workers,
                show_progress=cfg.show_progress,
            )
            self.store.write_draws("missreg", missreg)
            self.store.write_csv("missreg_fixed_effects.csv", qfr.fixed_effect_summary(missreg))

    def infer(self) -> None:
        inf = self.settings.inference
        draws, mapper = load_fitted_model(self.store)
        basis = load_quantlet_basis(self.store)
        transform = load_transform(self.store)
        projector = posterior.MonotoneProjector(basis.n, inf.n_isplines)

        predicted = qfr.predict_quantile(draws, basis, inf.reference_x, np.zeros(draws.k_m), mapper=mapper)
        values, rate = projector.project_matrix(predicted.values)
        logger.info(
            f"Projected {rate:.2%} of {len(predicted)} reference draws onto monotone functions",
            extra={"projection_rate": rate, "n_draws": len(predicted)}
        )
        projected = QuantileDraws(values, predicted.scale)

        tidy = posterior.summarize_draws(projected, transform, inf.thresholds)
        self.store.write_csv("summaries_draws.csv", tidy)
        self.store.write_csv("summaries.csv", posterior.aggregate_summaries(tidy))

        bands = posterior.joint_bands(projected.values, inf.alpha)
        scores = posterior.simbas(projected.values)
        table = posterior.band_table({"p": quantile_grid(basis.n)}, bands, scores)
        table.insert(2, "estimate_count", transform.inverse(bands.mean))
        self.store.write_csv("quantile_bands.csv", table)

        probs, surface = posterior.residual_covariance_surface(draws, basis, inf.covariance_grid)
        p1, p2 = np.meshgrid(probs, probs, indexing="ij")
        self.store.write_csv("residual_covariance.csv", pd.DataFrame({
            "p1": p1.ravel(), "p2": p2.ravel(), "covariance": surface.ravel(),
        }))
        self.store.write_json("inference.json", {
            "reference_x": list(inf.reference_x),
            "alpha": inf.alpha,
            "thresholds": list(inf.thresholds),
            "n_draws": draws.n_draws,
            "projection_rate": rate,
            "critical_value": bands.critical_value,
        })

    def simulate(self) -> None:
        cfg = self.settings
        sim = cfg.simulation
        cohort = simgen.generate_cohort(sim.generator, cfg.seed, cfg.show_progress)
        masked = simgen.impose_missingness(cohort, sim.scenario, cfg.seed)
        path = write_epoch_csv(masked, self.store.path(SIMULATED_CORPUS))
        self.store.track_output(path)
        self.store.write_csv("simulated_bins.csv", simgen.bin_summary(masked))
        logger.info(
            f"Simulated {len(masked)} subjects with {masked.n_days} days",
            extra={"subjects": len(masked), "days": masked.n_days, "case": sim.scenario.case}
        )

    def evaluate(self) -> None:
        ise, bias, truth = evaluation.run_evaluation(self.settings)
        self.store.write_csv("evaluation_ise.csv", ise)
        self.store.write_csv("evaluation_bias.csv", bias)
        self.store.write_csv("evaluation_ise_summary.csv", evaluation.ise_summary(ise))
        self.store.write_csv("evaluation_bias_summary.csv", evaluation.bias_summary(bias, truth))
        self.store.write_csv("evaluation_truth.csv", pd.DataFrame(
            [
                {"age": age, "sex": sex, "mu_y": truth.mean((age, sex)), "mu_y_se_bound": truth.mean_se_bound((age, sex))}
                for age, sex in truth.quantiles
            ],
            columns=["age", "sex", "mu_y", "mu_y_se_bound"],
        ))
        self.store.write_json("evaluation.json", {
            "lam": truth.transform.lam,
            "epsilon": truth.transform.epsilon,
            "replicates": self.settings.simulation.replicates,
            "preset": self.settings.simulation.preset,
            "case": self.settings.simulation.scenario.case,
        })

    def report(self) -> None:
        from distreg.services.report import ReportBuilder

        ReportBuilder(self.settings, self.store).build()
