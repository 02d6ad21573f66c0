import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from statprinciples.errors import DimensionMismatchError, InputError, NumericalError
from statprinciples.gaussian import condition
from statprinciples.hierarchy import (
    LinearHM,
    gain_matrix,
    naive_wm_moments,
    precision_decomposition_residual,
    predictive_distribution,
    simulate_retrieval_errors,
    unbiasedness_check,
    univariate_update,
    wm_tm_diagnostics,
)

from conftest import random_hm, random_spd, scalar_hm


def joint_oracle(hm, z):
    """Condition the stacked (y, z) Gaussian on its data block."""
    p, m = hm.state_dim, hm.data_dim
    return condition(hm.joint(), list(range(p, p + m)), z)


def covariance_form_oracle(hm, z):
    """Covariance-form Kalman update, written independently of the precision form."""
    s = hm.prior_cov
    innov_cov = hm.K @ s @ hm.K.T + hm.noise_cov
    gain = np.linalg.solve(innov_cov, hm.K @ s).T
    mean = hm.prior_mean + gain @ (z - hm.c - hm.K @ hm.prior_mean)
    return mean, s - gain @ hm.K @ s


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_scalar_example():
    r = predictive_distribution(scalar_hm(), [3.0])
    assert r.predictive_mean[0] == pytest.approx(2.6, abs=1e-14)
    assert r.predictive_cov[0, 0] == pytest.approx(0.8, abs=1e-14)
    oracle = joint_oracle(scalar_hm(), [3.0])
    assert oracle.mean[0] == pytest.approx(2.6, abs=1e-14)
    assert oracle.cov[0, 0] == pytest.approx(0.8, abs=1e-14)


def test_exact_data_dominate():
    hm = LinearHM(np.zeros(3), np.eye(3), 1e-12 * np.eye(3), np.zeros(3), np.eye(3))
    z = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(predictive_distribution(hm, z).predictive_mean, z, atol=1e-10)


def test_zero_innovation_returns_prior_mean(rng):
    hm = random_hm(rng, 4, 7)
    r = predictive_distribution(hm, hm.c + hm.K @ hm.prior_mean)
    np.testing.assert_allclose(r.predictive_mean, hm.prior_mean, atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_matches_oracles(seed):
    rng = np.random.default_rng(seed)
    hm = random_hm(rng)
    z = rng.standard_normal(hm.data_dim)
    r = predictive_distribution(hm, z)
    oracle = joint_oracle(hm, z)
    assert rel(r.predictive_mean, oracle.mean) <= 1e-8
    assert rel(r.predictive_cov, oracle.cov) <= 1e-8
    mean2, cov2 = covariance_form_oracle(hm, z)
    assert rel(r.predictive_mean, mean2) <= 1e-8
    assert rel(r.predictive_cov, cov2) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_precision_only_increases(seed):
    rng = np.random.default_rng(seed)
    hm = random_hm(rng)
    r = predictive_distribution(hm, rng.standard_normal(hm.data_dim))
    assert np.all(np.diag(r.predictive_cov) <= np.diag(hm.prior_cov) + 1e-12)


def test_gain_tends_to_left_inverse(rng):
    K = rng.standard_normal((6, 3))
    hm = LinearHM(np.zeros(6), K, 1e-10 * np.eye(6), np.zeros(3), np.eye(3))
    np.testing.assert_allclose(gain_matrix(hm) @ K, np.eye(3), atol=1e-6)


def test_dimension_errors():
    with pytest.raises(DimensionMismatchError):
        predictive_distribution(scalar_hm(), [1.0, 2.0])
    with pytest.raises(InputError):
        LinearHM([0.0, 0.0], [[1.0]], [[1.0]], [0.0], [[1.0]])


def test_singular_covariances_rejected():
    with pytest.raises(NumericalError):
        LinearHM([0.0], [[1.0]], [[0.0]], [0.0], [[1.0]])
    with pytest.raises(NumericalError):
        LinearHM([0.0, 0.0], [[1.0], [1.0]], np.eye(2), [0.0], [[0.0]])


def test_json_round_trip(rng):
    hm = random_hm(rng, 3, 5)
    back = LinearHM.from_json(hm.to_json())
    for name in ("c", "K", "noise_cov", "prior_mean", "prior_cov"):
        np.testing.assert_array_equal(getattr(back, name), getattr(hm, name))
    assert json.loads(hm.to_json()) == hm.to_dict()


@pytest.mark.parametrize(
    "args, expected",
    [((0.0, 1.0, 1.0, 2.0), (1.0, 0.5)), ((1.0, 4.0, 1.0, 3.0), (2.6, 0.8))],
)
def test_univariate_update(args, expected):
    assert univariate_update(*args) == pytest.approx(expected, abs=1e-14)


def test_univariate_uninformative_datum():
    mean, var = univariate_update(1.0, 4.0, 1e12, 100.0)
    assert mean == pytest.approx(1.0, abs=1e-9)
    assert var == pytest.approx(4.0, rel=1e-10)


def test_univariate_agrees_with_joint_oracle():
    oracle = joint_oracle(scalar_hm(), [3.0])
    mean, var = univariate_update(1.0, 4.0, 1.0, 3.0)
    assert mean == pytest.approx(oracle.mean[0], abs=1e-14)
    assert var == pytest.approx(oracle.cov[0, 0], abs=1e-14)


def test_precision_residual_zero_k():
    hm = LinearHM(np.zeros(2), np.zeros((2, 3)), np.eye(2), np.zeros(3), random_spd(np.random.default_rng(0), 3))
    assert precision_decomposition_residual(hm) <= 1e-12


def test_precision_residual_rectangular(rng):
    hm = random_hm(rng, 3, 5)
    scale = np.linalg.norm(np.linalg.inv(predictive_distribution(hm, np.zeros(5)).predictive_cov))
    assert precision_decomposition_residual(hm) / scale <= 1e-8


def test_unbiasedness_scalar():
    chk = unbiasedness_check(scalar_hm(), 100_000, seed=5)
    assert chk.analytic[0] == 1.0
    assert abs(chk.monte_carlo[0] - 1.0) <= 4 * chk.standard_error[0]


def test_unbiasedness_zero_k():
    hm = LinearHM([0.0], [[0.0]], [[1.0]], [1.5], [[2.0]])
    chk = unbiasedness_check(hm, 1000, seed=1)
    np.testing.assert_array_equal(chk.monte_carlo, [1.5])


def test_wm_equals_tm(rng):
    hm = random_hm(rng, 4, 6)
    diag = wm_tm_diagnostics(hm, hm)
    assert np.max(np.abs(diag.true_bias)) <= 1e-10
    pc = predictive_distribution(hm, np.zeros(6)).predictive_cov
    assert rel(diag.true_uncertainty, pc) <= 1e-8


def test_mismatched_prior_mean_bias():
    wm = scalar_hm(prior_mean=0.0, prior_var=1.0)
    tm = scalar_hm(prior_mean=2.0, prior_var=1.0)
    diag = wm_tm_diagnostics(wm, tm)
    assert diag.true_bias[0] == pytest.approx(-1.0, abs=1e-14)
    err = simulate_retrieval_errors(wm, tm, 200_000, seed=3)[:, 0]
    assert abs(err.mean() + 1.0) <= 4 * err.std(ddof=1) / np.sqrt(err.size)
    assert err.var() == pytest.approx(diag.true_uncertainty[0, 0], rel=0.02)


def test_inflated_noise_is_unbiased_but_worse():
    wm = scalar_hm(noise_var=4.0)
    tm = scalar_hm(noise_var=1.0)
    diag = wm_tm_diagnostics(wm, tm)
    assert diag.true_bias[0] == pytest.approx(0.0, abs=1e-14)
    matched = wm_tm_diagnostics(tm, tm).true_uncertainty
    assert np.all(np.linalg.eigvalsh(diag.true_uncertainty - matched) >= -1e-12)
    err = simulate_retrieval_errors(wm, tm, 200_000, seed=4)[:, 0]
    assert err.var() == pytest.approx(diag.true_uncertainty[0, 0], rel=0.02)


def test_wm_tm_shape_mismatch(rng):
    with pytest.raises(DimensionMismatchError):
        wm_tm_diagnostics(random_hm(rng, 2, 3), random_hm(rng, 3, 3))


def test_naive_moments():
    bias, unc = naive_wm_moments(scalar_hm(prior_mean=0.0, prior_var=1.0))
    assert bias[0] == 0.0
    assert unc[0, 0] == pytest.approx(0.5, abs=1e-15)
    hm = LinearHM([0.0], [[0.0]], [[1.0]], [0.0], [[3.0]])
    assert naive_wm_moments(hm)[1][0, 0] == pytest.approx(3.0)
