"""
Tests for subject quantile functions and the Box-Cox transform.
"""
import numpy as np
import pytest
from scipy.stats import norm

from distreg.exceptions import ScaleMismatchError
from distreg.models.quantile import BoxCoxTransform, QuantileFunction, QuantileScale
from distreg.services import distq
from distreg.utils.grid import quantile_grid


def test_discrete_value_quantile_examples():
    """Test cut-points on the subject grid for small samples."""
    assert distq.discrete_value_quantile([0, 0, 0, 2]) == [(0, 0.2), (2, 0.8)]
    assert distq.discrete_value_quantile([3, 1, 2]) == [(1, 0.25), (2, 0.5), (3, 0.75)]
    assert distq.discrete_value_quantile([5] * 9) == [(5, 0.1)]


def test_discrete_value_quantile_too_few():
    """Test fewer than two observations are rejected."""
    with pytest.raises(ValueError):
        distq.discrete_value_quantile([])
    with pytest.raises(ValueError, match="two observations"):
        distq.discrete_value_quantile([4])


def test_monotone_smooth_constant():
    """Test a single cut-point gives a constant function."""
    q = distq.monotone_smooth_quantile([(5, 0.3)], n=64)
    np.testing.assert_array_equal(q.values, np.full(64, 5.0))
    assert q.scale is QuantileScale.COUNT


def test_monotone_smooth_two_points():
    """Test constant extension outside the cut-points and monotone interior."""
    q = distq.monotone_smooth_quantile([(0, 0.2), (2, 0.8)], n=99)
    grid = quantile_grid(99)

    np.testing.assert_allclose(q.values[grid <= 0.2], 0.0, atol=1e-12)
    np.testing.assert_allclose(q.values[grid >= 0.8], 2.0, atol=1e-12)
    assert q.is_monotone(0.0)


def test_monotone_smooth_passes_through_cut_points(rng):
    """Test the interpolant hits every cut-point lying on the grid."""
    n = 255
    grid = quantile_grid(n)
    idx = np.sort(rng.choice(n, 12, replace=False))
    values = np.cumsum(rng.uniform(0.5, 3.0, 12))
    q = distq.monotone_smooth_quantile(list(zip(values, grid[idx])), n=n)

    np.testing.assert_allclose(q.values[idx], values, atol=1e-12)
    assert q.is_monotone()


def test_subject_quantile_monotone(rng):
    """Test counts to quantile function is monotone and non-negative."""
    counts = rng.negative_binomial(2, 0.05, 3000)
    counts[:800] = 0
    q = distq.subject_quantile(counts, n=128)
    assert q.is_monotone()
    assert q.values.min() >= 0.0


def test_smoothing_error_shrinks_with_sample_size():
    """Test reconstruction error of a rounded log-normal falls as the sample grows."""
    n = 256
    truth = QuantileFunction(np.exp(3.0 + 0.8 * norm.ppf(quantile_grid(n))), QuantileScale.COUNT)
    errors = []
    for size in (200, 2000):
        sample = np.round(np.exp(3.0 + 0.8 * norm.ppf((np.arange(1, size + 1)) / (size + 1))))
        errors.append(distq.wasserstein2(distq.subject_quantile(sample.astype(int), n), truth))
    assert errors[1] < errors[0]


def test_frechet_mean():
    """Test pointwise averaging of quantile functions."""
    zero = QuantileFunction(np.zeros(16), QuantileScale.COUNT)
    two = QuantileFunction(np.full(16, 2.0), QuantileScale.COUNT)
    np.testing.assert_allclose(distq.frechet_mean([zero, two]).values, 1.0)
    np.testing.assert_allclose(distq.frechet_mean([two, two, two]).values, 2.0)
    np.testing.assert_allclose(distq.frechet_mean([zero, two], weights=[3, 1]).values, 0.5)


def test_frechet_mean_within_pairwise_bound(skewed_quantiles):
    """Test the barycenter is no farther from any input than the widest pair."""
    qs = [QuantileFunction(row, QuantileScale.BOXCOX) for row in skewed_quantiles]
    mean = distq.frechet_mean(qs)
    widest = max(distq.wasserstein2(a, b) for a in qs for b in qs)
    assert all(distq.wasserstein2(mean, q) <= widest for q in qs)


def test_frechet_mean_mixed_scales():
    """Test combining count and boxcox scales raises ScaleMismatchError."""
    a = QuantileFunction(np.ones(8), QuantileScale.COUNT)
    b = QuantileFunction(np.ones(8), QuantileScale.BOXCOX)
    with pytest.raises(ScaleMismatchError):
        distq.frechet_mean([a, b])


def test_lambda_grid():
    """Test the lambda grid has 199 points and contains -2/99."""
    grid = distq.lambda_grid()
    assert grid.size == 199
    assert grid[0] == -2.0 and grid[-1] == 2.0
    assert np.min(np.abs(grid + 2.0 / 99.0)) < 1e-12


def test_fit_boxcox_normal_shape():
    """Test normal-quantile input selects lambda near one."""
    q = QuantileFunction(5.0 + norm.ppf(quantile_grid(1024)), QuantileScale.COUNT)
    assert abs(distq.fit_boxcox(q).lam - 1.0) < 0.1


def test_fit_boxcox_lognormal_shape():
    """Test log-normal-quantile input selects lambda near zero."""
    q = QuantileFunction(np.exp(norm.ppf(quantile_grid(1024))), QuantileScale.COUNT)
    assert abs(distq.fit_boxcox(q).lam) < 0.1


def test_fit_boxcox_order_invariant(rng):
    """Test the fitted lambda does not depend on the input ordering."""
    values = np.sort(rng.gamma(2.0, 10.0, 200))
    q = QuantileFunction(values, QuantileScale.COUNT)
    shuffled = QuantileFunction(rng.permutation(values), QuantileScale.COUNT)
    assert distq.fit_boxcox(q).lam == distq.fit_boxcox(shuffled).lam


def test_boxcox_identities():
    """Test BC(1) = 0 and lambda = 0 reduces to log."""
    for lam in (-2.0, -2.0 / 99.0, 0.0, 0.5, 2.0):
        transform = BoxCoxTransform(lam=lam)
        assert abs(transform.forward(np.array([1.0 - transform.epsilon]))[0]) < 1e-12
    log_transform = BoxCoxTransform(lam=0.0)
    np.testing.assert_allclose(log_transform.forward(np.array([2.0])), np.log(2.0 + 1e-6))


def test_boxcox_round_trip(rng):
    """Test the inverse recovers positive values to 1e-8 relative error."""
    x = rng.uniform(0.5, 5000.0, 500)
    for lam in (-2.0 / 99.0, 0.0, 0.7):
        transform = BoxCoxTransform(lam=lam)
        back = transform.inverse(transform.forward(x))
        assert np.max(np.abs(back - x) / x) < 1e-8


def test_boxcox_inverse_clamps():
    """Test 1 + lambda * y <= 0 maps to zero counts."""
    transform = BoxCoxTransform(lam=0.5)
    assert transform.inverse(np.array([-10.0]))[0] == 0.0


def test_boxcox_inverse_negative_lambda_boundary():
    """Test negative lambda values at and past -1/lambda map to finite zero counts."""
    transform = BoxCoxTransform(lam=-2.0 / 99.0)
    counts = transform.inverse(np.array([0.0, 10.0, 49.0, 49.5, 60.0]))

    assert np.all(np.isfinite(counts))
    assert counts[0] == pytest.approx(1.0 - transform.epsilon)
    assert counts[1] < counts[2]
    np.testing.assert_array_equal(counts[3:], 0.0)

    q = QuantileFunction(np.linspace(0.0, 60.0, 32), QuantileScale.BOXCOX)
    assert np.all(np.isfinite(distq.inverse_boxcox(q, transform).values))


def test_apply_boxcox_scales():
    """Test apply and inverse enforce their input scales."""
    transform = BoxCoxTransform(lam=-2.0 / 99.0)
    q = QuantileFunction(np.linspace(0.0, 100.0, 32), QuantileScale.COUNT)
    y = distq.apply_boxcox(q, transform)

    assert y.scale is QuantileScale.BOXCOX
    assert np.all(np.diff(y.values) > 0)
    np.testing.assert_allclose(distq.inverse_boxcox(y, transform).values, q.values, atol=1e-8)
    with pytest.raises(ScaleMismatchError):
        distq.apply_boxcox(y, transform)
    with pytest.raises(ScaleMismatchError):
        distq.inverse_boxcox(q, transform)


def test_wasserstein2_constants():
    """Test the distance between constants is the squared gap."""
    a = QuantileFunction(np.full(64, 1.0), QuantileScale.COUNT)
    b = QuantileFunction(np.full(64, 4.0), QuantileScale.COUNT)
    assert distq.wasserstein2(a, a) == 0.0
    assert distq.wasserstein2(a, b) == pytest.approx(9.0)
    assert distq.wasserstein2(a, b) == pytest.approx(distq.wasserstein2(b, a))


def test_wasserstein_triangle(skewed_quantiles):
    """Test the square-rooted distance satisfies the triangle inequality."""
    a, b, c = (QuantileFunction(row, QuantileScale.BOXCOX) for row in skewed_quantiles[:3])
    d = lambda x, y: np.sqrt(distq.wasserstein2(x, y))
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-12
