"""
Missingness profiles and their functional principal component basis.
"""
from dataclasses import dataclass

import numpy as np

from distreg.utils.grid import N_BINS


@dataclass(frozen=True)
class MissingnessProfile:
    """Per-bin missing rate pi and its empirical logit m."""

    pi: np.ndarray
    m: np.ndarray
    n_days: int
    cohort_size: int

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        m = np.asarray(self.m, dtype=float)
        if pi.shape != (N_BINS,) or m.shape != (N_BINS,):
            raise ValueError(f"profiles need {N_BINS} bins")
        if np.any(pi < 0) or np.any(pi > 1):
            raise ValueError("missing rates must lie in [0, 1]")
        if not np.all(np.isfinite(m)):
            raise ValueError("empirical logits must be finite")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "m", m)


@dataclass(frozen=True)
class FpcBasis:
    """Mean, orthonormal components (rows) and eigenvalues of the profiles."""

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    fve: float
    n_subjects: int
    total_variance: float

    def __post_init__(self):
        components = np.asarray(self.components, dtype=float).reshape(-1, np.size(self.mean))
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "eigenvalues", np.asarray(self.eigenvalues, dtype=float))
        if self.eigenvalues.shape[0] != components.shape[0]:
            raise ValueError("one eigenvalue per component")
        if np.any(np.diff(self.eigenvalues) > 0):
            raise ValueError("eigenvalues must be sorted descending")

    @property
    def k(self) -> int:
        return int(self.components.shape[0])
