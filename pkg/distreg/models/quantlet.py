"""
Quantlet basis for quantile functions.
"""
from dataclasses import dataclass

import numpy as np

from distreg.utils.grid import grid_weights


@dataclass(frozen=True)
class QuantletBasis:
    """K x n basis, orthonormal under the grid quadrature weights."""

    psi: np.ndarray
    min_loo_ccc: float
    ccc_min: float = 0.99
    smoothing_window: int = 5

    def __post_init__(self):
        psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        if psi.shape[0] < 2:
            raise ValueError("a quantlet basis has at least the two Gaussian elements")
        psi.flags.writeable = False
        object.__setattr__(self, "psi", psi)

    @property
    def k(self) -> int:
        return int(self.psi.shape[0])

    @property
    def n(self) -> int:
        return int(self.psi.shape[1])

    @property
    def weights(self) -> np.ndarray:
        return grid_weights(self.n)

    def gram(self) -> np.ndarray:
        return (self.psi * self.weights) @ self.psi.T
