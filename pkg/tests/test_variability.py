import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from statprinciples.errors import InputError, NegativeModelVarianceError, NumericalError
from statprinciples.variability import (
    RegressionDataset,
    ScaleDecomposition,
    additivity_scan,
    anova_decomposition,
    bias_variance,
    box_cox,
    conserve,
    correlated_error_budget,
    fit_ols,
    ledger_from,
    prediction_moments,
    reml_variance,
    residuals,
    simulate_prediction_errors,
    total_variance_check,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def ones_ds(z, meas_var=0.0):
    return RegressionDataset(np.ones((len(z), 1)), np.asarray(z, dtype=float), meas_var)


def test_ols_mean_of_two_points():
    assert fit_ols(ones_ds([1.0, 3.0]))[0] == pytest.approx(2.0, abs=1e-15)


def test_residuals_zero_in_column_space(rng):
    X = rng.standard_normal((10, 3))
    ds = RegressionDataset(X, X @ [1.0, -2.0, 0.5], 0.0)
    np.testing.assert_allclose(residuals(ds), 0.0, atol=1e-12)
    assert reml_variance(ds) == pytest.approx(0.0, abs=1e-24)


def test_ols_within_standard_errors(rng):
    n = 10_000
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    beta = np.array([1.0, 2.0])
    ds = RegressionDataset(X, X @ beta + rng.standard_normal(n), 0.0)
    se = np.sqrt(np.diag(reml_variance(ds) * np.linalg.inv(X.T @ X)))
    assert np.all(np.abs(fit_ols(ds) - beta) <= 4 * se)


def test_residuals_orthogonal(rng):
    X = rng.standard_normal((50, 4))
    ds = RegressionDataset(X, rng.standard_normal(50), 0.0)
    assert np.max(np.abs(X.T @ residuals(ds))) <= 1e-10


def test_reml_two_points():
    ds = ones_ds([1.0, 3.0])
    np.testing.assert_allclose(residuals(ds), [-1.0, 1.0])
    assert reml_variance(ds) == pytest.approx(2.0)


def test_reml_large_n(rng):
    n, sigma2 = 20_000, 3.0
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    ds = RegressionDataset(X, X @ [0.5, 1.0] + np.sqrt(sigma2) * rng.standard_normal(n), 0.0)
    assert abs(reml_variance(ds) - sigma2) <= 5 * np.sqrt(2 * sigma2 ** 2 / (n - 2))


def test_dataset_validation():
    with pytest.raises(InputError):
        ones_ds([1.0])
    with pytest.raises(NumericalError):
        RegressionDataset(np.ones((4, 2)), np.arange(4.0), 0.0)
    with pytest.raises(InputError):
        ones_ds([1.0, 2.0], meas_var=-1.0)


@pytest.mark.parametrize("s_xi2, s_eps2, s_delta2", [(5.0, 2.0, 3.0), (4.0, 0.0, 4.0)])
def test_ledger(s_xi2, s_eps2, s_delta2):
    led = ledger_from(s_xi2, s_eps2)
    assert led.s_delta2 == s_delta2
    assert led.conserved


def test_negative_model_variance():
    with pytest.raises(NegativeModelVarianceError) as exc:
        ledger_from(1.0, 2.0)
    assert exc.value.s_xi2 == 1.0 and exc.value.s_eps2 == 2.0


@settings(max_examples=200)
@given(st.floats(1e-6, 1e6), st.floats(0, 1e6))
def test_conserve_identity_exact(a, b):
    assume(a >= b)
    led = ledger_from(a, b)
    assert led.s_delta2 + led.s_eps2 == led.s_xi2


def test_conserve_dataset():
    led = conserve(ones_ds([1.0, 3.0, 2.0, 6.0], meas_var=0.5))
    assert led.s_delta2 + led.s_eps2 == led.s_xi2
    assert led.s_xi2 == pytest.approx(np.var([1, 3, 2, 6], ddof=1))


@pytest.mark.parametrize(
    "sd2, se2, target",
    [(0.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.5, 0.5, 2.0)],
)
def test_total_variance(sd2, se2, target):
    chk = total_variance_check(sd2, se2, n_draws=100_000, seed=1)
    assert abs(chk.lhs - chk.rhs) <= chk.tolerance + 1e-15
    assert chk.lhs == pytest.approx(target, rel=0.02)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=2, max_size=60), st.integers(1, 5), st.integers(0, 1000))
def test_anova_identity(values, k, seed):
    groups = np.random.default_rng(seed).integers(0, k, size=len(values))
    t = anova_decomposition(values, groups)
    assert t.between + t.within == pytest.approx(t.total, rel=1e-10, abs=1e-9)


def test_prediction_mse_worked_example():
    ds = ones_ds([0.0, 1.0, 2.0, 3.0])
    led = ledger_from(2.0, 0.5)
    pm = prediction_moments(ds, [1.0], led)
    assert pm.mse == pytest.approx(2.0, abs=1e-14)


def test_prediction_reduces_to_textbook():
    ds = ones_ds([0.0, 1.0, 2.0, 3.0])
    led = ledger_from(2.0, 2.0)
    assert prediction_moments(ds, [1.0], led).mse == pytest.approx(0.5)


def test_prediction_mse_monte_carlo():
    err = simulate_prediction_errors(np.ones((4, 1)), [0.0], [1.0], 1.5, 0.5, 400_000, seed=2)
    assert np.mean(err ** 2) == pytest.approx(2.0, rel=0.02)


def test_prediction_mse_nonincreasing_and_floor():
    led = ledger_from(2.0, 0.5)
    prev = np.inf
    for n in (2, 4, 8, 100, 10_000):
        mse = prediction_moments(ones_ds(np.arange(float(n))), [1.0], led).mse
        assert led.s_delta2 <= mse <= prev
        prev = mse
    assert prev == pytest.approx(1.5, abs=1e-3)


def test_bias_variance_examples():
    assert bias_variance([3.0, 3.0, 3.0], 3.0) == (0.0, 0.0, 0.0)
    assert bias_variance([0.0, 2.0], 0.0) == pytest.approx((1.0, 1.0, 2.0))


@settings(max_examples=100)
@given(st.lists(finite, min_size=2, max_size=50), finite)
def test_bias_variance_identity(est, theta):
    bv = bias_variance(est, theta)
    direct = float(np.mean((np.asarray(est) - theta) ** 2))
    assert abs(bv.mse - bv.bias_sq - bv.variance) <= 1e-12 * max(1.0, bv.mse)
    assert bv.mse == pytest.approx(direct, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("v1, v2, rho, expected", [(1, 1, 0, 2), (1, 1, -1, 0), (4, 1, -0.5, 3)])
def test_correlated_budget(v1, v2, rho, expected):
    assert correlated_error_budget(v1, v2, rho) == pytest.approx(expected, abs=1e-14)


def test_correlated_budget_monte_carlo(rng):
    cov = [[4.0, -1.0], [-1.0, 1.0]]
    draws = rng.multivariate_normal([0, 0], cov, size=1_000_000)
    assert draws.sum(axis=1).var() == pytest.approx(3.0, rel=0.01)


@given(st.floats(0, 100), st.floats(0, 100), st.floats(-1, 1))
def test_correlated_budget_lower_bound(v1, v2, rho):
    floor = (math.sqrt(v1) - math.sqrt(v2)) ** 2
    assert correlated_error_budget(v1, v2, rho) >= floor - 1e-9 * (1 + v1 + v2)
    assert correlated_error_budget(v1, v2, -1.0) == pytest.approx(floor, abs=1e-9 * (1 + v1 + v2))


@pytest.mark.parametrize("lam", [-2.0, -0.5, 0.0, 1e-8, 0.5, 1.0, 2.0])
def test_box_cox_fixed_point(lam):
    assert box_cox(1.0, lam) == 0.0


def test_box_cox_values():
    assert box_cox(3.0, 1.0) == pytest.approx(2.0)
    assert abs(box_cox(10.0, 1e-6) - math.log(10.0)) <= 1e-5
    with pytest.raises(InputError):
        box_cox(0.0, 0.5)


@given(st.floats(-3, 3), st.floats(0.01, 100), st.floats(0.01, 100))
def test_box_cox_increasing(lam, a, b):
    assume(abs(a - b) > 1e-6 * max(a, b))
    lo, hi = sorted((a, b))
    assert box_cox(lo, lam) < box_cox(hi, lam)


GRID = np.arange(-1.0, 2.0 + 1e-9, 0.25)


def test_scan_linear_data():
    rng = np.random.default_rng(10)
    x = rng.uniform(0, 3, 500)
    z = 1 + 2 * x + 0.1 * rng.standard_normal(500)
    assert abs(additivity_scan(x, z, GRID)[0].lam - 1.0) <= 0.25


def test_scan_log_linear_data():
    rng = np.random.default_rng(11)
    x = rng.uniform(0, 3, 500)
    z = np.exp(1 + 2 * x + 0.1 * rng.standard_normal(500))
    assert abs(additivity_scan(x, z, GRID)[0].lam) <= 0.25


def test_scan_constant_response():
    rows = additivity_scan(np.arange(10.0), np.full(10, 3.0), [0.0, 1.0])
    assert all(r.linearity == 0.0 and r.score == 0.0 for r in rows)


def test_scan_scores_in_unit_interval(rng):
    x = rng.uniform(0, 1, 100)
    rows = additivity_scan(x, np.exp(rng.standard_normal(100)), GRID)
    for r in rows:
        for v in (r.linearity, r.homoskedasticity, r.symmetry, r.score):
            assert 0.0 <= v <= 1.0


def test_scale_decomposition_additive():
    d = ScaleDecomposition({"trend": 1.5, "season": -0.5, "site": 2.0}, 0.3)
    assert d.mean == pytest.approx(3.0)
    with pytest.raises(InputError):
        ScaleDecomposition({"a": 1.0}, -1.0)
