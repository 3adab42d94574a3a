"""
Design matrices and posterior draws of the quantile functional regression.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from distreg.utils.splines import bspline_design

N_CELLS = 4
N_FIXED = 6
# cell-mean column order
CELL_LABELS = ("F1", "F2", "M1", "M2")


@dataclass(frozen=True)
class SplineMap:
    """
    Stored mapping from a covariate value to its DR-spline row.

    The penalized directions are projected off span{1, covariate} using the
    coefficients estimated on the training values; new values are clipped to
    the training range before evaluation.
    """

    interior_knots: np.ndarray
    lo: float
    hi: float
    transform: np.ndarray
    projection: np.ndarray
    knot_method: str = "quantile"

    def __post_init__(self):
        object.__setattr__(self, "interior_knots", np.asarray(self.interior_knots, dtype=float))
        object.__setattr__(self, "transform", np.asarray(self.transform, dtype=float))
        object.__setattr__(self, "projection", np.asarray(self.projection, dtype=float))

    @property
    def n_columns(self) -> int:
        return int(self.transform.shape[1])

    def raw(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), self.lo, self.hi)
        return bspline_design(x, self.interior_knots, self.lo, self.hi) @ self.transform

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), self.lo, self.hi)
        linear = np.column_stack([np.ones_like(x), x])
        return self.raw(x) - linear @ self.projection

    def to_dict(self) -> Dict[str, Any]:
        return {
            "interior_knots": self.interior_knots.tolist(),
            "lo": self.lo,
            "hi": self.hi,
            "transform": self.transform.tolist(),
            "projection": self.projection.tolist(),
            "knot_method": self.knot_method,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SplineMap":
        return cls(**data)


@dataclass(frozen=True)
class DesignMapper:
    """Everything needed to build design rows for new covariate values."""

    age_spline: SplineMap
    bmi_spline: SplineMap
    age_center: float
    bmi_center: float

    def fixed_rows(self, cells: np.ndarray, age: np.ndarray, bmi: np.ndarray) -> np.ndarray:
        """Cell-mean weights followed by centered age and bmi."""
        cells = np.atleast_2d(np.asarray(cells, dtype=float))
        age = np.atleast_1d(np.asarray(age, dtype=float))
        bmi = np.atleast_1d(np.asarray(bmi, dtype=float))
        return np.column_stack([cells, age - self.age_center, bmi - self.bmi_center])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "age_spline": self.age_spline.to_dict(),
            "bmi_spline": self.bmi_spline.to_dict(),
            "age_center": self.age_center,
            "bmi_center": self.bmi_center,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DesignMapper":
        return cls(
            age_spline=SplineMap.from_dict(data["age_spline"]),
            bmi_spline=SplineMap.from_dict(data["bmi_spline"]),
            age_center=float(data["age_center"]),
            bmi_center=float(data["bmi_center"]),
        )


@dataclass(frozen=True)
class DesignBlock:
    """Row-aligned design for N subjects."""

    x: np.ndarray
    m_star: np.ndarray
    z_age: np.ndarray
    z_bmi: np.ndarray
    mapper: Optional[DesignMapper] = None
    subject_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        n = x.shape[0]
        m_star = np.asarray(self.m_star, dtype=float).reshape(n, -1)
        z_age = np.asarray(self.z_age, dtype=float).reshape(n, -1)
        z_bmi = np.asarray(self.z_bmi, dtype=float).reshape(n, -1)
        if x.shape[1] != N_FIXED:
            raise ValueError(f"fixed-effect matrix needs {N_FIXED} columns")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "m_star", m_star)
        object.__setattr__(self, "z_age", z_age)
        object.__setattr__(self, "z_bmi", z_bmi)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def k_m(self) -> int:
        return int(self.m_star.shape[1])

    def without_missingness(self) -> "DesignBlock":
        """The same design with the M* block dropped."""
        return DesignBlock(
            x=self.x,
            m_star=np.zeros((self.n, 0)),
            z_age=self.z_age,
            z_bmi=self.z_bmi,
            mapper=self.mapper,
            subject_ids=self.subject_ids,
        )

    def without_random_effects(self) -> "DesignBlock":
        """The same design with both spline blocks dropped."""
        return DesignBlock(
            x=self.x,
            m_star=self.m_star,
            z_age=np.zeros((self.n, 0)),
            z_bmi=np.zeros((self.n, 0)),
            mapper=self.mapper,
            subject_ids=self.subject_ids,
        )


@dataclass(frozen=True)
class PosteriorDraws:
    """
    Retained Gibbs draws, indexed [draw, coefficient, ...].

    tau_age / tau_bmi are NaN for coefficients fitted without that spline block.
    """

    beta: np.ndarray
    beta_miss: np.ndarray
    u_age: np.ndarray
    u_bmi: np.ndarray
    tau_age: np.ndarray
    tau_bmi: np.ndarray
    s: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        r, k = np.shape(self.s)
        if r < 1:
            raise ValueError("at least one retained draw is required")
        for name in ("beta", "beta_miss", "u_age", "u_bmi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 3:
                arr = arr.reshape(r, k, arr.size // (r * k))
            object.__setattr__(self, name, arr)
        for name in ("tau_age", "tau_bmi", "s"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(r, k)
            object.__setattr__(self, name, arr)
        if np.any(self.s <= 0):
            raise ValueError("residual variances must be positive")
        for tau in (self.tau_age, self.tau_bmi):
            if np.any(tau[np.isfinite(tau)] <= 0):
                raise ValueError("random-effect variances must be positive")

    @property
    def n_draws(self) -> int:
        return int(self.s.shape[0])

    @property
    def k(self) -> int:
        return int(self.s.shape[1])

    @property
    def k_m(self) -> int:
        return int(self.beta_miss.shape[2])

    def coefficient_means(
        self,
        x: np.ndarray,
        m_star: np.ndarray,
        z_age: np.ndarray,
        z_bmi: np.ndarray,
    ) -> np.ndarray:
        """
        Mean structure per draw for one design row.

        Returns:
            Array of shape (R, K) of conditional-mean coefficients
        """
        out = np.einsum("rkj,j->rk", self.beta, np.asarray(x, dtype=float))
        if self.k_m:
            out += np.einsum("rkj,j->rk", self.beta_miss, np.asarray(m_star, dtype=float))
        if self.u_age.shape[2]:
            out += np.einsum("rkj,j->rk", self.u_age, np.asarray(z_age, dtype=float))
        if self.u_bmi.shape[2]:
            out += np.einsum("rkj,j->rk", self.u_bmi, np.asarray(z_bmi, dtype=float))
        return out
