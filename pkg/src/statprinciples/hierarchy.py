"""Linear-Gaussian hierarchical models.

Data model ``z | y ~ N(c + K y, noise_cov)`` over process model
``y ~ N(prior_mean, prior_cov)``.  The predictive distribution ``[y | z]`` is
computed in precision form, which works for a forward matrix ``K`` of any
shape.
"""

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatchError, InputError, NumericalError
from .gaussian import GaussianDist, is_spd, psd_factor, spd_inverse, stack, symmetrize


@dataclass(frozen=True, eq=False)
class LinearHM:
    c: np.ndarray
    K: np.ndarray
    noise_cov: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        noise = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        mu = np.atleast_1d(np.asarray(self.prior_mean, dtype=float))
        prior = np.atleast_2d(np.asarray(self.prior_cov, dtype=float))
        m, p = K.shape
        if c.shape != (m,) or noise.shape != (m, m):
            raise DimensionMismatchError(
                f"K has {m} rows but c has shape {c.shape} and noise_cov {noise.shape}"
            )
        if mu.shape != (p,) or prior.shape != (p, p):
            raise DimensionMismatchError(
                f"K has {p} columns but prior_mean has shape {mu.shape} and prior_cov {prior.shape}"
            )
        if not is_spd(noise):
            raise NumericalError("noise_cov is not symmetric positive definite")
        if not is_spd(prior):
            raise NumericalError("prior_cov is not symmetric positive definite")
        for name, arr in zip(("c", "K", "noise_cov", "prior_mean", "prior_cov"), (c, K, noise, mu, prior)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def data_dim(self):
        return self.K.shape[0]

    @property
    def state_dim(self):
        return self.K.shape[1]

    def to_dict(self):
        return {
            "c": self.c.tolist(),
            "K": self.K.tolist(),
            "noise_cov": self.noise_cov.tolist(),
            "prior_mean": self.prior_mean.tolist(),
            "prior_cov": self.prior_cov.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        missing = {"c", "K", "noise_cov", "prior_mean", "prior_cov"} - set(doc)
        if missing:
            raise InputError(f"model document lacks fields: {sorted(missing)}")
        return cls(doc["c"], doc["K"], doc["noise_cov"], doc["prior_mean"], doc["prior_cov"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"model is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def joint(self):
        """Joint Gaussian of the stacked vector ``(y, z)``."""
        s_a = self.prior_cov
        k_s = self.K @ s_a
        return stack(
            [self.prior_mean, self.c + self.K @ self.prior_mean],
            [[s_a, k_s.T], [k_s, symmetrize(self.K @ s_a @ self.K.T + self.noise_cov)]],
        )


@dataclass(frozen=True, eq=False)
class Retrieval:
    predictive_mean: np.ndarray
    predictive_cov: np.ndarray
    gain: np.ndarray

    def as_dist(self):
        return GaussianDist(self.predictive_mean, self.predictive_cov)


class TMDiagnostics(NamedTuple):
    true_bias: np.ndarray
    true_uncertainty: np.ndarray


class UnbiasednessCheck(NamedTuple):
    analytic: np.ndarray
    monte_carlo: np.ndarray
    standard_error: np.ndarray


def _posterior_parts(hm):
    prior_prec = spd_inverse(hm.prior_cov, "prior_cov")
    noise_prec = spd_inverse(hm.noise_cov, "noise_cov")
    kt_r = hm.K.T @ noise_prec
    post_prec = symmetrize(prior_prec + kt_r @ hm.K)
    post_cov = spd_inverse(post_prec, "posterior precision")
    gain = post_cov @ kt_r
    return prior_prec, noise_prec, post_prec, post_cov, gain


def gain_matrix(hm):
    """G = (S_a^-1 + K' S_e^-1 K)^-1 K' S_e^-1."""
    return _posterior_parts(hm)[4]


def predictive_distribution(hm, z):
    """Mean and covariance of ``[y | z]`` together with the gain matrix."""
    z = np.atleast_1d(np.asarray(z, dtype=float)).reshape(-1)
    if z.size != hm.data_dim:
        raise DimensionMismatchError(f"z has length {z.size}, model expects {hm.data_dim}")
    *_, post_cov, gain = _posterior_parts(hm)
    innovation = z - hm.c - hm.K @ hm.prior_mean
    mean = hm.prior_mean + gain @ innovation
    return Retrieval(mean, post_cov, gain)


def univariate_update(mu_a, var_a, var_e, z):
    """Precision-weighted combination of a scalar prior and a single datum.

    Returns ``(mean, var)``; the weights depend only on ``var_a / var_e``.
    """
    if not (var_a > 0 and var_e > 0):
        raise InputError("variances must be positive")
    prec = 1.0 / var_a + 1.0 / var_e
    mean = (mu_a / var_a + z / var_e) / prec
    return mean, 1.0 / prec


def precision_decomposition_residual(hm):
    """Frobenius norm of prec(y|z) - prec(y) - K' prec(z|y) K.

    prec(y|z) is obtained by inverting the predictive covariance, so the
    residual measures how well the precision-increment identity survives a
    round trip through the covariance form.
    """
    prior_prec, noise_prec, _, post_cov, _ = _posterior_parts(hm)
    post_prec = spd_inverse(post_cov, "predictive covariance")
    resid = post_prec - prior_prec - hm.K.T @ noise_prec @ hm.K
    return float(np.linalg.norm(resid, "fro"))


def unbiasedness_check(hm, n_draws, seed):
    """Compare E(E(y|z)) = prior_mean with its Monte Carlo average.

    ``n_draws`` pairs (y, z) are simulated from the model; the predictive
    mean is averaged over the simulated ``z``.  The standard error is the
    per-coordinate spread of the predictive means over sqrt(n_draws).
    """
    n_draws = int(n_draws)
    if n_draws < 2:
        raise InputError("n_draws must be at least 2")
    rng = np.random.default_rng(seed)
    l_a = psd_factor(hm.prior_cov)
    l_e = psd_factor(hm.noise_cov)
    y = hm.prior_mean + rng.standard_normal((n_draws, hm.state_dim)) @ l_a.T
    z = hm.c + y @ hm.K.T + rng.standard_normal((n_draws, hm.data_dim)) @ l_e.T
    gain = gain_matrix(hm)
    innov = z - hm.c - hm.K @ hm.prior_mean
    means = hm.prior_mean + innov @ gain.T
    mc = means.mean(axis=0)
    se = means.std(axis=0, ddof=1) / np.sqrt(n_draws)
    return UnbiasednessCheck(hm.prior_mean.copy(), mc, se)


def _check_compatible(wm, tm):
    if wm.K.shape != tm.K.shape:
        raise DimensionMismatchError(
            f"working model K is {wm.K.shape}, true model K is {tm.K.shape}"
        )


def wm_tm_diagnostics(wm, tm):
    """Bias and error covariance of the working-model retrieval under the true model.

    The working-model predictor is affine in ``z``: ``a + G_W z``.  With
    ``z = c_T + K_T y + e`` under the true model, the error is
    ``a + G_W c_T + (G_W K_T - I) y + G_W e``, whose first two moments follow
    in closed form.
    """
    _check_compatible(wm, tm)
    g = gain_matrix(wm)
    offset = wm.prior_mean - g @ (wm.c + wm.K @ wm.prior_mean)
    a = g @ tm.K - np.eye(wm.state_dim)
    bias = offset + g @ tm.c + a @ tm.prior_mean
    unc = symmetrize(a @ tm.prior_cov @ a.T + g @ tm.noise_cov @ g.T)
    return TMDiagnostics(bias, unc)


def simulate_retrieval_errors(wm, tm, n_draws, seed):
    """Draws of ``yhat_WM - y`` with (y, z) generated under ``tm``; shape (n_draws, state_dim)."""
    _check_compatible(wm, tm)
    rng = np.random.default_rng(seed)
    n_draws = int(n_draws)
    y = tm.prior_mean + rng.standard_normal((n_draws, tm.state_dim)) @ psd_factor(tm.prior_cov).T
    z = tm.c + y @ tm.K.T + rng.standard_normal((n_draws, tm.data_dim)) @ psd_factor(tm.noise_cov).T
    g = gain_matrix(wm)
    yhat = wm.prior_mean + (z - wm.c - wm.K @ wm.prior_mean) @ g.T
    return yhat - y


def naive_wm_moments(wm):
    """Error moments computed under the working model itself: zero bias, predictive covariance."""
    *_, post_cov, _ = _posterior_parts(wm)
    return np.zeros(wm.state_dim), post_cov
