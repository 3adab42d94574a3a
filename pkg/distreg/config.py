"""
Run configuration.

Settings come from field defaults, a TOML file, the environment
(DISTREG_ prefix, "__" for nesting, optional .env file) and finally
`--set key.sub=value` overrides, in increasing order of priority.
"""
import tomllib
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Tuple, Type

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

from distreg.exceptions import ConfigError

MVPA_CUTPOINT = 1148.0


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PathSettings(Section):
    input_csv: Optional[Path] = None
    output_dir: Path = Path("runs/default")


class PreprocessingSettings(Section):
    n_grid: int = Field(1024, ge=16)
    nonwear_min_run: int = Field(60, ge=1)
    min_wear_epochs: int = Field(960, ge=0, le=2100)
    min_days: int = Field(3, ge=1)
    epsilon: float = Field(1e-6, gt=0)
    lambda_grid_size: int = Field(199, ge=3)


class FpcaSettings(Section):
    fve: float = Field(0.99, gt=0, le=1)
    k_override: Optional[int] = Field(None, ge=0)


class BasisSettings(Section):
    ccc_min: float = Field(0.99, gt=0, le=1)
    k_max: int = Field(30, ge=2)
    smoothing_window: int = Field(5, ge=1)
    k_override: Optional[int] = Field(None, ge=2)
    evaluate_loo: bool = True


class McmcSettings(Section):
    burn_in: int = Field(1000, ge=0)
    keep: int = Field(2000, ge=1)
    thin: int = Field(1, ge=1)


class PriorSettings(Section):
    beta_variance: float = Field(1e6, gt=0)
    ig_shape: float = Field(0.001, gt=0)
    ig_rate: float = Field(0.001, gt=0)


class ModelSettings(Section):
    n_knots: int = Field(5, ge=1)
    missingness_adjustment: bool = True
    random_effects: bool = True
    missingness_regression: bool = True
    mcmc: McmcSettings = Field(default_factory=McmcSettings)
    priors: PriorSettings = Field(default_factory=PriorSettings)


class InferenceSettings(Section):
    thresholds: List[float] = Field(default_factory=lambda: [100.0, 500.0, MVPA_CUTPOINT])
    alpha: float = Field(0.05, gt=0, lt=1)
    n_isplines: int = Field(20, ge=2)
    reference_x: List[float] = Field(default_factory=lambda: [0.25, 0.25, 0.25, 0.25, 14.0, 50.0])
    covariance_grid: int = Field(128, ge=2)
    contrast_grid: int = Field(64, ge=2)
    contrasts: bool = True
    age_step: float = Field(0.1, gt=0)
    bmi_step: float = Field(1.0, gt=0)
    age_reference: float = 12.0
    bmi_reference: float = 50.0
    contrast_probs: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75])
    whatif_block_hours: float = Field(1.5, gt=0)
    whatif_rate: float = Field(1.0, ge=0, le=1)
    whatif_start_hours: Optional[List[float]] = None
    density_points: int = Field(200, ge=2)

    @field_validator("thresholds")
    @classmethod
    def include_mvpa_cutpoint(cls, value: List[float]) -> List[float]:
        if any(v < 0 for v in value):
            raise ValueError("thresholds must be non-negative counts")
        return sorted(set(value) | {MVPA_CUTPOINT})

    @field_validator("reference_x")
    @classmethod
    def six_entries(cls, value: List[float]) -> List[float]:
        if len(value) != 6:
            raise ValueError("reference_x needs 4 cell weights, age and bmi")
        return value


class GeneratorSettings(Section):
    """Parametric diurnal activity generator on the log(x + 1) scale."""
    ages: List[int] = Field(default_factory=lambda: [12, 13, 14, 15, 16])
    subjects_per_cell: int = Field(40, ge=1)
    days_per_subject: int = Field(3, ge=1)
    baseline: float = 3.2
    morning_amplitude: float = 1.2
    morning_hour: float = 8.0
    afternoon_amplitude: float = 1.8
    afternoon_hour: float = 14.5
    evening_amplitude: float = 0.9
    evening_hour: float = 19.5
    bump_width_hours: float = Field(2.0, gt=0)
    night_decay: float = Field(1.5, ge=0)
    age_effect: float = -0.08
    male_effect: float = 0.25
    intercept_sd: float = Field(0.35, ge=0)
    noise_sd: float = Field(1.6, ge=0)
    noise_ar: float = Field(0.6, ge=0, lt=1)
    site_share: float = Field(0.5, ge=0, le=1)
    bmi_mean: float = Field(50.0, ge=0, le=100)
    bmi_sd: float = Field(25.0, ge=0)


class ScenarioSettings(Section):
    """Simulated non-wear applied on top of a complete cohort."""
    case: Literal["none", "bedtime", "bedtime_plus_daytime"] = "bedtime"
    morning_mean_minutes: float = Field(60.0, ge=0)
    night_mean_minutes: float = Field(90.0, ge=0)
    bedtime_sd_minutes: float = Field(30.0, gt=0)
    bedtime_bounds_minutes: Tuple[float, float] = (0.0, 240.0)
    bedtime_age_slope_minutes: float = 5.0
    reference_age: float = 12.0
    daytime_center_hour: float = 18.0
    daytime_sd_hours: float = Field(2.0, gt=0)
    daytime_length_mean_minutes: float = Field(90.0, gt=0)
    daytime_length_sd_minutes: float = Field(30.0, gt=0)
    daytime_length_bounds_minutes: Tuple[float, float] = (30.0, 240.0)
    trigger_male: float = Field(0.3, ge=0, le=1)
    trigger_female: float = Field(0.2, ge=0, le=1)

    @model_validator(mode="after")
    def ordered_bounds(self) -> "ScenarioSettings":
        for name in ("bedtime_bounds_minutes", "daytime_length_bounds_minutes"):
            lo, hi = getattr(self, name)
            if not 0 <= lo < hi:
                raise ValueError(f"{name} must satisfy 0 <= lower < upper")
        return self


PRESETS: Dict[str, Dict[str, Any]] = {
    "desk-scale": {
        "replicates": 20,
        "truth_subject_days": 20000,
        "k_q": 7,
        "generator": {"subjects_per_cell": 40, "days_per_subject": 3},
        "mcmc": {"burn_in": 250, "keep": 500, "thin": 1},
    },
    "paper-scale": {
        "replicates": 100,
        "truth_subject_days": 100000,
        "k_q": 7,
        "k_m": 11,
        "generator": {"subjects_per_cell": 100, "days_per_subject": 3},
        "mcmc": {"burn_in": 1000, "keep": 2000, "thin": 1},
    },
}


def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge update into a copy of base."""
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class SimulationSettings(Section):
    preset: Literal["desk-scale", "paper-scale", "custom"] = "desk-scale"
    replicates: int = Field(20, ge=1)
    truth_subject_days: int = Field(20000, ge=1)
    k_q: Optional[int] = Field(7, ge=2)
    k_m: Optional[int] = Field(None, ge=0)
    generator: GeneratorSettings = Field(default_factory=GeneratorSettings)
    scenario: ScenarioSettings = Field(default_factory=ScenarioSettings)
    mcmc: McmcSettings = Field(default_factory=lambda: McmcSettings(burn_in=250, keep=500))

    @model_validator(mode="before")
    @classmethod
    def fill_preset(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        preset = data.get("preset", "desk-scale")
        return deep_merge(PRESETS.get(preset, {}), data)


class Settings(BaseSettings):
    """Run configuration for every subcommand."""

    model_config = SettingsConfigDict(
        env_prefix="DISTREG_",
        env_nested_delimiter="__",
        env_file=".env",
        extra="forbid",
    )

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    workers: int = Field(1, ge=1)
    seed: int = Field(20240501, ge=0)
    show_progress: bool = False

    paths: PathSettings = Field(default_factory=PathSettings)
    preprocessing: PreprocessingSettings = Field(default_factory=PreprocessingSettings)
    fpca: FpcaSettings = Field(default_factory=FpcaSettings)
    basis: BasisSettings = Field(default_factory=BasisSettings)
    model: ModelSettings = Field(default_factory=ModelSettings)
    inference: InferenceSettings = Field(default_factory=InferenceSettings)
    simulation: SimulationSettings = Field(default_factory=lambda: SimulationSettings.model_validate({}))

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings, env_settings, dotenv_settings, TomlConfigSettingsSource(settings_cls))


def parse_override(item: str) -> Dict[str, Any]:
    """
    Turn "a.b.c=value" into {"a": {"b": {"c": value}}}.

    The value is read as a TOML literal when possible, else kept as a string.
    """
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not key=value")
    key, raw = item.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"override '{item}' has an empty key")
    try:
        value: Any = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    nested: Dict[str, Any] = {parts[-1]: value}
    for part in reversed(parts[:-1]):
        nested = {part: nested}
    return nested


def load_settings(config_path: Optional[Path] = None, overrides: Iterable[str] = ()) -> Settings:
    """
    Build Settings from an optional TOML file plus overrides.

    Raises:
        ConfigError: On unreadable TOML or failed validation
    """
    init: Dict[str, Any] = {}
    for item in overrides:
        init = deep_merge(init, parse_override(item))

    settings_cls: Type[Settings] = Settings
    if config_path is not None:
        config_path = Path(config_path)
        if not config_path.is_file():
            raise ConfigError(f"config file not found: {config_path}")
        try:
            tomllib.loads(config_path.read_text())
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"invalid TOML in {config_path}: {e}") from e

        class FileSettings(Settings):
            model_config = SettingsConfigDict(toml_file=config_path)

        settings_cls = FileSettings

    try:
        loaded = settings_cls(**init)
        # FileSettings is a local class and cannot be pickled
        return loaded if settings_cls is Settings else Settings(**loaded.model_dump())
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
