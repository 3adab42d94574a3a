"""
Distributional summaries and credible bands.
"""
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

MVPA_CUTPOINT = 1148.0


@dataclass(frozen=True)
class FunctionalSummary:
    """Scalar functionals of one monotone quantile draw."""

    mu_y: float
    mu_count: float
    p_delta: Dict[float, float]
    zero_prop: float
    mvpa_prop: float
    mvpa_minutes: float

    def __post_init__(self):
        for name, value in (("zero_prop", self.zero_prop), ("mvpa_prop", self.mvpa_prop)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} {value} outside [0, 1]")
        for delta, value in self.p_delta.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"p_delta at {delta} is {value}, outside [0, 1]")

    def as_records(self) -> List[Dict[str, float]]:
        """Tidy (functional, value) pairs."""
        records = [
            {"functional": "mu_y", "value": self.mu_y},
            {"functional": "mu_count", "value": self.mu_count},
            {"functional": "zero_prop", "value": self.zero_prop},
            {"functional": "mvpa_prop", "value": self.mvpa_prop},
            {"functional": "mvpa_minutes", "value": self.mvpa_minutes},
        ]
        for delta in sorted(self.p_delta):
            records.append({"functional": f"p_delta_{delta:g}", "value": self.p_delta[delta]})
        return records


@dataclass(frozen=True)
class CredibleBands:
    """Joint and pointwise credible bands of a functional estimand."""

    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    pointwise_lower: np.ndarray
    pointwise_upper: np.ndarray
    critical_value: float
    alpha: float

    def excludes_zero(self) -> np.ndarray:
        return (self.lower > 0) | (self.upper < 0)
