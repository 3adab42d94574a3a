"""
Probability grid and quadrature helpers.

Quantile functions live on p_j = j/(n+1), j = 1..n. Integrals over (0, 1)
use trapezoid weights on the grid with the end values held constant out to
0 and 1, so the weights sum to one and a constant integrates to itself.
"""
from functools import lru_cache

import numpy as np

N_GRID = 1024

# 30-second epochs from 6:00 to 23:30
EPOCHS_PER_DAY = 2100
EPOCHS_PER_BIN = 60
N_BINS = 35
WINDOW_START_HOUR = 6.0
EPOCHS_PER_HOUR = 120
WINDOW_MINUTES = EPOCHS_PER_DAY / 2


@lru_cache(maxsize=16)
def _cached_grid(n: int) -> np.ndarray:
    grid = np.arange(1, n + 1, dtype=float) / (n + 1)
    grid.flags.writeable = False
    return grid


@lru_cache(maxsize=16)
def _cached_weights(n: int) -> np.ndarray:
    if n == 1:
        weights = np.ones(1)
    else:
        h = 1.0 / (n + 1)
        weights = np.full(n, h)
        weights[0] = weights[-1] = 1.5 * h
    weights.flags.writeable = False
    return weights


def quantile_grid(n: int = N_GRID) -> np.ndarray:
    """Return the read-only grid p_j = j/(n+1)."""
    if n < 1:
        raise ValueError("grid size must be positive")
    return _cached_grid(int(n))


def grid_weights(n: int = N_GRID) -> np.ndarray:
    """Return read-only quadrature weights for the grid of size n."""
    if n < 1:
        raise ValueError("grid size must be positive")
    return _cached_weights(int(n))


def grid_integral(values: np.ndarray) -> np.ndarray:
    """Integrate grid values over (0, 1) along the last axis."""
    values = np.asarray(values, dtype=float)
    return values @ grid_weights(values.shape[-1])


def epoch_hours(n_epochs: int = EPOCHS_PER_DAY) -> np.ndarray:
    """Clock time in hours at the start of each epoch of the daily window."""
    return WINDOW_START_HOUR + np.arange(n_epochs) / EPOCHS_PER_HOUR
