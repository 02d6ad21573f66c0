"""Regression error budgets and the additive-scales transformation scan.

The regression error is split as ``xi = delta + eps``: model error plus
measurement error.  With the measurement variance known from calibration,
the REML residual variance yields the model-error variance by subtraction.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatchError, InputError, NegativeModelVarianceError, NumericalError

RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class RegressionDataset:
    """Design matrix ``X`` (n x p), response ``z`` and calibrated measurement variance."""

    X: np.ndarray
    z: np.ndarray
    meas_var: float = 0.0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        z = np.asarray(self.z, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] != z.size:
            raise DimensionMismatchError(f"X has shape {X.shape} but z has length {z.size}")
        n, p = X.shape
        if not n > p >= 1:
            raise InputError(f"need n > p >= 1, got n={n}, p={p}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(z))):
            raise InputError("X and z must be finite")
        sv = np.linalg.svd(X, compute_uv=False)
        if sv[-1] <= RANK_RTOL * sv[0]:
            raise NumericalError("design matrix X is rank deficient")
        if not self.meas_var >= 0:
            raise InputError("meas_var must be non-negative")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "meas_var", float(self.meas_var))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class VarianceLedger:
    s_xi2: float
    s_eps2: float
    s_delta2: float
    conserved: bool = True


@dataclass(frozen=True)
class ScaleDecomposition:
    """Large-scale components of E(y) plus the aggregated small-scale variance."""

    large_scale: dict = field(default_factory=dict)
    small_scale_var: float = 0.0

    def __post_init__(self):
        if self.small_scale_var < 0:
            raise InputError("small_scale_var must be non-negative")

    @property
    def mean(self):
        return float(sum(self.large_scale.values()))


def fit_ols(ds):
    beta, *_ = np.linalg.lstsq(ds.X, ds.z, rcond=None)
    return beta


def residuals(ds, beta=None):
    if beta is None:
        beta = fit_ols(ds)
    return ds.z - ds.X @ beta


def reml_variance(ds):
    """Residual sum of squares over n - p."""
    dof = ds.n - ds.p
    if dof <= 0:
        raise InputError("zero residual degrees of freedom")
    r = residuals(ds)
    return float(r @ r) / dof


def conserve(ds):
    """Split the REML error variance into model error and measurement error.

    Raises
    ------
    NegativeModelVarianceError
        When ``s_xi2 < meas_var``; the exception carries both values.
    """
    s_xi2 = reml_variance(ds)
    return ledger_from(s_xi2, ds.meas_var)


def ledger_from(s_xi2, s_eps2):
    if s_eps2 < 0:
        raise InputError("measurement variance must be non-negative")
    s_delta2 = s_xi2 - s_eps2
    if s_delta2 < 0:
        raise NegativeModelVarianceError(s_xi2, s_eps2)
    # recompute s_xi2 from its parts so the ledger adds up exactly in floating point
    return VarianceLedger(s_delta2 + s_eps2, float(s_eps2), float(s_delta2), True)


class TotalVarianceCheck(NamedTuple):
    lhs: float
    rhs: float
    tolerance: float


class TwoLevelSample(NamedTuple):
    y: np.ndarray  # (n_draws,)
    z: np.ndarray  # (n_draws, n_rep)


def simulate_two_level(sigma_delta2, sigma_eps2, mean, n_draws, seed, n_rep=1):
    """Draw ``y = mean + delta`` and ``n_rep`` noisy observations ``z = y + eps`` of each."""
    if sigma_delta2 < 0 or sigma_eps2 < 0:
        raise InputError("variances must be non-negative")
    rng = np.random.default_rng(seed)
    y = mean + np.sqrt(sigma_delta2) * rng.standard_normal(int(n_draws))
    z = y[:, None] + np.sqrt(sigma_eps2) * rng.standard_normal((int(n_draws), int(n_rep)))
    return TwoLevelSample(y, z)


def total_variance_check(sigma_delta2, sigma_eps2, mean=0.0, n_draws=100_000, seed=0):
    """Sample version of var(z) = var(E(z|y)) + E(var(z|y)).

    ``lhs`` is the sample variance of z; ``rhs`` the sample variance of the
    conditional means ``E(z|y) = y`` plus the conditional variance.  The
    returned tolerance is four standard deviations of ``lhs - rhs``.
    """
    sim = simulate_two_level(sigma_delta2, sigma_eps2, mean, n_draws, seed)
    z = sim.z[:, 0]
    lhs = float(np.var(z, ddof=1))
    rhs = float(np.var(sim.y, ddof=1)) + float(sigma_eps2)
    # lhs - rhs = (s_eps^2 - sigma_eps^2) + 2 cov(y, eps)
    sd = sigma_eps2 * np.sqrt(2.0 / (n_draws - 1)) + 2.0 * np.sqrt(sigma_delta2 * sigma_eps2 / n_draws)
    return TotalVarianceCheck(lhs, rhs, float(4.0 * sd))


class AnovaTable(NamedTuple):
    between: float
    within: float
    total: float


def anova_decomposition(values, groups):
    """Between-group, within-group and total sums of squares."""
    values = np.asarray(values, dtype=float).reshape(-1)
    groups = np.asarray(groups).reshape(-1)
    if values.size != groups.size:
        raise DimensionMismatchError("values and groups differ in length")
    _, inv = np.unique(groups, return_inverse=True)
    counts = np.bincount(inv)
    sums = np.bincount(inv, weights=values)
    means = sums / counts
    grand = values.mean()
    between = float(np.sum(counts * (means - grand) ** 2))
    within = float(np.sum((values - means[inv]) ** 2))
    total = float(np.sum((values - grand) ** 2))
    return AnovaTable(between, within, total)


class PredictionMoments(NamedTuple):
    pred: float
    mse: float


def prediction_moments(ds, x_new, ledger):
    """Predictor of ``y_new = x_new' beta + delta_new`` and its mean squared error.

    ``mse = s_xi2 * x_new' (X'X)^-1 x_new + s_delta2``: estimation error of
    the regression plus the model-error variance, which does not vanish
    after conditioning on the data.
    """
    if not ledger.conserved:
        raise InputError("ledger is not conserved")
    x_new = np.atleast_1d(np.asarray(x_new, dtype=float)).reshape(-1)
    if x_new.size != ds.p:
        raise DimensionMismatchError(f"x_new has length {x_new.size}, expected {ds.p}")
    beta = fit_ols(ds)
    q, r = np.linalg.qr(ds.X)
    v = np.linalg.solve(r.T, x_new)
    leverage = float(v @ v)
    return PredictionMoments(float(x_new @ beta), ledger.s_xi2 * leverage + ledger.s_delta2)


def simulate_prediction_errors(X, beta, x_new, sigma_delta2, sigma_eps2, reps, seed, chunk=200_000):
    """Monte Carlo draws of ``x_new' beta_hat - y_new`` under the two-level model.

    Each replicate simulates a fresh data set ``z = X beta + delta + eps`` and
    an independent ``y_new = x_new' beta + delta_new``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    x_new = np.atleast_1d(np.asarray(x_new, dtype=float))
    n = X.shape[0]
    # beta_hat = H z with H the OLS hat map onto coefficients
    H = np.linalg.pinv(X)
    w = x_new @ H
    sd_xi = np.sqrt(sigma_delta2 + sigma_eps2)
    rng = np.random.default_rng(seed)
    out = np.empty(int(reps))
    mean_pred = x_new @ beta
    for start in range(0, int(reps), chunk):
        m = min(chunk, int(reps) - start)
        xi = sd_xi * rng.standard_normal((m, n))
        delta_new = np.sqrt(sigma_delta2) * rng.standard_normal(m)
        pred = mean_pred + xi @ w
        out[start:start + m] = pred - (mean_pred + delta_new)
    return out


class BiasVariance(NamedTuple):
    bias_sq: float
    variance: float
    mse: float


def bias_variance(estimates, theta):
    """Empirical squared bias, variance (divisor n) and mean squared error.

    With divisor-n moments ``mse == bias_sq + variance`` up to round-off.
    """
    est = np.asarray(estimates, dtype=float).reshape(-1)
    if est.size < 2:
        raise InputError("need at least 2 replicate estimates")
    mean = est.mean()
    bias_sq = float((mean - theta) ** 2)
    variance = float(np.mean((est - mean) ** 2))
    return BiasVariance(bias_sq, variance, bias_sq + variance)


def correlated_error_budget(var1, var2, rho):
    """var(e1 + e2) for correlated errors with correlation ``rho``."""
    if var1 < 0 or var2 < 0:
        raise InputError("variances must be non-negative")
    if not -1.0 <= rho <= 1.0:
        raise InputError(f"correlation {rho!r} outside [-1, 1]")
    total = var1 + var2 + 2.0 * rho * np.sqrt(var1) * np.sqrt(var2)
    # Cauchy-Schwarz: only round-off can push this below zero
    return max(float(total), 0.0)


def box_cox(x, lam):
    """Box-Cox transform ``(x**lam - 1)/lam``, ``log x`` at ``lam == 0``.

    Works elementwise on arrays.  Uses ``expm1`` so small ``lam`` stays
    accurate and the map is continuous at zero.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise InputError("Box-Cox needs strictly positive input")
    logx = np.log(arr)
    if lam == 0:
        out = logx
    else:
        out = np.expm1(lam * logx) / lam
    return float(out) if np.ndim(out) == 0 else out


def _skewness(r):
    """Adjusted Fisher-Pearson sample skewness."""
    n = r.size
    m2 = np.mean((r - r.mean()) ** 2)
    if n < 3 or m2 == 0:
        return 0.0
    m3 = np.mean((r - r.mean()) ** 3)
    g1 = m3 / m2 ** 1.5
    return float(np.sqrt(n * (n - 1)) / (n - 2) * g1)


def _simple_fit(x, g):
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (g - g.mean())) / sxx
    resid = g - g.mean() - slope * xc
    return slope, resid


class ScanRow(NamedTuple):
    lam: float
    linearity: float
    homoskedasticity: float
    symmetry: float
    score: float


def additivity_scan(x, z, lambda_grid, weights=(1.0, 1.0, 1.0)):
    """Rank Box-Cox powers by how linear, homoskedastic and symmetric the fit looks.

    For each ``lam``, ``g_lam(z)`` is regressed on ``x``.  Scores, each in
    [0, 1]:

    * linearity: R^2 of the fit;
    * homoskedasticity: 1 - |slope| of standardized |residual| on
      standardized ``x`` (a heuristic, not a test);
    * symmetry: 1 - |adjusted sample skewness| of the residuals, clamped.

    The overall score is ``lin**w1 * homo**w2 * sym**w3``.  Rows are returned
    best first.  A response with no spread gets zero linearity rather than an
    error.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    grid = np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    if x.size != z.size:
        raise DimensionMismatchError("x and z differ in length")
    if grid.size == 0:
        raise InputError("lambda grid is empty")
    if x.size < 3 or np.ptp(x) == 0:
        raise InputError("need at least 3 points with varying x")
    if np.any(grid != 1.0) and np.any(~(z > 0)):
        raise InputError("Box-Cox powers other than 1 need strictly positive z")
    w1, w2, w3 = (float(w) for w in weights)
    rows = []
    for lam in grid:
        g = z - 1.0 if lam == 1.0 else box_cox(z, lam)
        g = np.asarray(g, dtype=float)
        syy = float(np.sum((g - g.mean()) ** 2))
        slope, resid = _simple_fit(x, g)
        if syy <= 0 or not np.isfinite(syy):
            lin = 0.0
        else:
            lin = min(max(1.0 - float(resid @ resid) / syy, 0.0), 1.0)
        absr = np.abs(resid)
        if np.std(absr) == 0:
            homo = 1.0
        else:
            homo = 1.0 - abs(float(np.corrcoef(x, absr)[0, 1]))
        sym = min(max(1.0 - abs(_skewness(resid)), 0.0), 1.0)
        score = lin ** w1 * homo ** w2 * sym ** w3
        rows.append(ScanRow(float(lam), lin, homo, sym, score))
    rows.sort(key=lambda r: (-r.score, r.lam))
    return rows
