"""
Quantile functions on the common probability grid and the Box-Cox map.
"""
import enum
from dataclasses import dataclass

import numpy as np

from distreg.utils.grid import quantile_grid

MONOTONE_TOL = 1e-10
DEFAULT_EPSILON = 1e-6


class QuantileScale(str, enum.Enum):
    """Scale a quantile function is expressed on."""
    COUNT = "count"
    BOXCOX = "boxcox"


@dataclass(frozen=True)
class QuantileFunction:
    """Values of Q on p_j = j/(n+1)."""

    values: np.ndarray
    scale: QuantileScale

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("quantile values must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(values)):
            raise ValueError("quantile values must be finite")
        scale = QuantileScale(self.scale)
        if scale is QuantileScale.COUNT and np.any(values < 0):
            raise ValueError("count-scale quantile values must be non-negative")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "scale", scale)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def grid(self) -> np.ndarray:
        return quantile_grid(self.n)

    def is_monotone(self, tol: float = MONOTONE_TOL) -> bool:
        return bool(np.all(np.diff(self.values) >= -tol))

    def repaired(self) -> "QuantileFunction":
        """Cumulative-max repair for violations at rounding level."""
        return QuantileFunction(np.maximum.accumulate(self.values), self.scale)


@dataclass(frozen=True)
class QuantileDraws:
    """Candidate quantile functions, one row per posterior draw."""

    values: np.ndarray
    scale: QuantileScale

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "scale", QuantileScale(self.scale))

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def n(self) -> int:
        return int(self.values.shape[1])

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)


@dataclass(frozen=True)
class BoxCoxTransform:
    """
    Box-Cox power transform applied to counts shifted by epsilon.

    BC(x) = ((x + eps)^lam - 1) / lam, or log(x + eps) when lam == 0.
    """

    lam: float
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not -2.0 <= self.lam <= 2.0:
            raise ValueError(f"lambda {self.lam} outside [-2, 2]")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def forward(self, x: np.ndarray) -> np.ndarray:
        shifted = np.asarray(x, dtype=float) + self.epsilon
        if self.lam == 0:
            return np.log(shifted)
        return (np.power(shifted, self.lam) - 1.0) / self.lam

    def inverse(self, y: np.ndarray) -> np.ndarray:
        """
        Counts from Box-Cox values. Where 1 + lam * y <= 0 the value lies
        outside the transform's range and maps to a count of 0.
        """
        y = np.asarray(y, dtype=float)
        if self.lam == 0:
            with np.errstate(over="ignore"):
                shifted = np.exp(y)
        else:
            base = 1.0 + self.lam * y
            inside = base > 0
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                powered = np.power(np.where(inside, base, 1.0), 1.0 / self.lam)
            shifted = np.where(inside, powered, 0.0)
        shifted = np.minimum(shifted, np.finfo(float).max)
        return np.maximum(shifted - self.epsilon, 0.0)
