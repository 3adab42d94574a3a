"""
Tests for the quantlet basis service.
"""
import numpy as np
import pytest
from scipy.stats import norm

from distreg.exceptions import NonMonotoneQuantileError, QuantletBasisError
from distreg.models.quantile import QuantileFunction, QuantileScale
from distreg.services import quantlets
from distreg.utils.grid import grid_weights, quantile_grid


def test_gaussian_elements_orthonormal():
    """Test the constant and probit elements are weighted-orthonormal."""
    rows = quantlets.gaussian_elements(256)
    gram = (rows * grid_weights(256)) @ rows.T
    np.testing.assert_allclose(gram, np.eye(2), atol=1e-10)
    assert np.all(np.diff(rows[1]) > 0)


def test_concordance():
    """Test CCC is one for identical vectors and penalizes shifts."""
    a = np.linspace(0.0, 1.0, 50)
    assert quantlets.concordance(a, a) == pytest.approx(1.0)
    assert quantlets.concordance(a, a + 1.0) < 0.5
    assert quantlets.concordance(np.ones(4), np.ones(4)) == 1.0


def test_gaussian_data_needs_two_elements(gaussian_quantiles):
    """Test exactly normal quantiles are reproduced by the Gaussian elements alone."""
    basis = quantlets.build_quantlet_basis(gaussian_quantiles, ccc_min=0.99, k_max=6, smoothing_window=1)
    assert basis.k == 2
    assert basis.min_loo_ccc >= 0.999


def test_basis_orthonormal(skewed_quantiles):
    """Test a fitted basis with residual components stays orthonormal."""
    basis = quantlets.build_quantlet_basis(skewed_quantiles, k_override=6, evaluate_loo=False)
    np.testing.assert_allclose(basis.gram(), np.eye(basis.k), atol=1e-8)
    assert np.isnan(basis.min_loo_ccc)


def test_k_override_capped_by_rank(gaussian_quantiles):
    """Test K is capped at the available components."""
    basis = quantlets.build_quantlet_basis(gaussian_quantiles, k_override=8, evaluate_loo=False)
    assert basis.k == 2


def test_loo_ccc_increases_with_k(skewed_quantiles):
    """Test more residual components never hurt the leave-one-out fit much."""
    builder = quantlets.QuantletBuilder(skewed_quantiles, k_max=8, smoothing_window=1)
    curve = builder.loo_ccc_curve()
    assert curve.shape == (7,)
    assert curve[-1] >= curve[0] - 1e-6
    assert quantlets.loo_ccc(skewed_quantiles, 8, smoothing_window=1) == pytest.approx(curve[-1])


def test_full_rank_basis_is_lossless_with_smoothing(rng):
    """Test the default smoothing window keeps a full-rank basis exact in and out of sample."""
    p = quantile_grid(256)
    n_subjects = 10
    q_matrix = (
        rng.normal(0.0, 1.0, (n_subjects, 1))
        + rng.uniform(0.5, 1.5, (n_subjects, 1)) * norm.ppf(p)
        + rng.uniform(0.1, 1.0, (n_subjects, 1)) * np.exp(3.0 * p)
    )

    assert quantlets.loo_ccc(q_matrix, 3) == pytest.approx(1.0, abs=1e-10)
    basis = quantlets.build_quantlet_basis(q_matrix, k_override=3, evaluate_loo=False)
    assert basis.smoothing_window == 5
    recon = quantlets.reconstruct_matrix(quantlets.project_matrix(q_matrix, basis), basis)
    np.testing.assert_allclose(recon, q_matrix, atol=1e-9)


def test_unreachable_target(skewed_quantiles):
    """Test an unreachable CCC target raises with the best value found."""
    with pytest.raises(QuantletBasisError) as excinfo:
        quantlets.build_quantlet_basis(skewed_quantiles, ccc_min=1.0, k_max=2)
    assert excinfo.value.best_ccc < 1.0


def test_rejects_non_monotone_rows(skewed_quantiles):
    """Test decreasing training rows are rejected."""
    with pytest.raises(NonMonotoneQuantileError):
        quantlets.QuantletBuilder(skewed_quantiles[:, ::-1])


def test_project_and_reconstruct(skewed_quantiles):
    """Test projection is the weighted least-squares fit in the basis span."""
    basis = quantlets.build_quantlet_basis(skewed_quantiles, k_override=5, evaluate_loo=False)
    coefficients = quantlets.project_matrix(skewed_quantiles, basis)
    recon = quantlets.reconstruct_matrix(coefficients, basis)

    residual = (skewed_quantiles - recon) * basis.weights
    np.testing.assert_allclose(residual @ basis.psi.T, 0.0, atol=1e-8)

    q = QuantileFunction(skewed_quantiles[0], QuantileScale.BOXCOX)
    np.testing.assert_allclose(quantlets.project(q, basis), coefficients[0])
    np.testing.assert_allclose(quantlets.reconstruct(coefficients[0], basis).values, recon[0])
