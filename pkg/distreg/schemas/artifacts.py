"""
Schemas for JSON sidecars written next to CSV artifacts.
"""
from pydantic import BaseModel, Field
from typing import Dict, List, Optional


class QuantileSidecar(BaseModel):
    """Metadata for the subject quantile matrices."""
    lam: float = Field(..., ge=-2, le=2, description="Box-Cox lambda")
    epsilon: float = Field(..., gt=0)
    n: int = Field(..., ge=1)
    grid: str = "p_j = j/(n+1), j = 1..n"
    n_subjects: int
    subject_ids: List[str] = []


class MissingnessSidecar(BaseModel):
    """Metadata for missingness profiles and the elogit correction."""
    cohort_size: int
    n_bins: int = 35
    epochs_per_bin: int = 60


class FpcBasisSchema(BaseModel):
    """Persisted FPC basis of the missingness profiles."""
    mean: List[float]
    components: List[List[float]]
    eigenvalues: List[float]
    fve: float = Field(..., gt=0, le=1.0 + 1e-12)
    n_subjects: int
    total_variance: float
    k: int


class QuantletSidecar(BaseModel):
    """Metadata of a persisted quantlet basis; the matrix lives in CSV."""
    k: int = Field(..., ge=2)
    n: int
    min_loo_ccc: Optional[float] = None
    ccc_min: float
    smoothing_window: int


class DrawsSidecar(BaseModel):
    """Dimensions, seeds and priors of a set of posterior draws."""
    response: str
    n_draws: int
    k: int
    k_m: int
    n_fixed: int = 6
    n_spline: int
    burn_in: int
    keep: int
    thin: int
    seed: int
    coefficient_seeds: List[List[int]] = []
    priors: Dict[str, float] = {}
    design: Optional[Dict] = None
    subject_ids: List[str] = []
    projection_rate: Optional[float] = None
