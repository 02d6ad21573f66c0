"""Spatial covariance, kriging with measurement error, and change of support.

The latent field is ``y(s) = mu(s) + delta(s)`` with exponential covariance
``C(h) = sill * exp(-|h| / scale)``; the data are ``z(s_i) = y(s_i) + eps_i``
with independent measurement errors of variance ``meas_var``.
"""

from dataclasses import dataclass
from statistics import NormalDist
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from . import _kernels
from .errors import DimensionMismatchError, InputError, NumericalError
from .gaussian import symmetrize

DUPLICATE_TOL = 1e-12
DEFAULT_QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


def _as_coords(locs):
    arr = np.asarray(locs, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InputError("coordinates must be an (n, d) array")
    return np.ascontiguousarray(arr)


def check_distinct(coords, tol=DUPLICATE_TOL):
    if coords.shape[0] > 1 and np.min(pdist(coords, "chebyshev")) <= tol:
        raise InputError("duplicate locations")


@dataclass(frozen=True)
class CovarianceFunction:
    """Stationary isotropic covariance; only the exponential family is available."""

    sill: float
    scale: float
    family: str = "exponential"

    def __post_init__(self):
        if self.family != "exponential":
            raise InputError(f"unknown covariance family {self.family!r}")
        if not self.sill > 0:
            raise InputError("sill must be positive")
        if not self.scale >= 0:
            raise InputError("scale must be non-negative")

    def __call__(self, h):
        """Covariance at lag distance ``h`` (array-friendly)."""
        h = np.asarray(h, dtype=float)
        if self.scale == 0:
            return np.where(h == 0, self.sill, 0.0)
        return self.sill * np.exp(-h / self.scale)

    def correlation(self, h):
        return self(h) / self.sill


def covariance_matrix(locs, cf, check=True):
    """Covariance matrix of the field at ``locs``."""
    coords = _as_coords(locs)
    if check:
        check_distinct(coords)
    return symmetrize(cf(cdist(coords, coords)))


def cross_covariance(a, b, cf):
    return cf(cdist(_as_coords(a), _as_coords(b)))


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    locations: np.ndarray
    values: np.ndarray
    meas_var: float = 0.0
    supports: Optional[np.ndarray] = None
    covariates: Optional[np.ndarray] = None

    def __post_init__(self):
        coords = _as_coords(self.locations)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if coords.shape[0] != values.size:
            raise DimensionMismatchError(
                f"{coords.shape[0]} locations but {values.size} values"
            )
        if values.size == 0:
            raise InputError("empty dataset")
        check_distinct(coords)
        if not self.meas_var >= 0:
            raise InputError("meas_var must be non-negative")
        object.__setattr__(self, "locations", coords)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "meas_var", float(self.meas_var))
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=float)
            if cov.ndim == 1:
                cov = cov[:, None]
            if cov.shape[0] != values.size:
                raise DimensionMismatchError("covariates must have one row per datum")
            object.__setattr__(self, "covariates", cov)
        if self.supports is not None:
            sup = np.asarray(self.supports)
            if sup.shape != (values.size,):
                raise DimensionMismatchError("supports must have one entry per datum")
            object.__setattr__(self, "supports", sup)

    @property
    def n(self):
        return self.values.size

    @property
    def dim(self):
        return self.locations.shape[1]


@dataclass(frozen=True)
class TrendSpec:
    """Mean model: polynomial in (a subset of) the coordinates plus covariate columns.

    ``degree=0`` is a constant mean; ``degree=1, axes=(1,)`` is a linear
    function of the second coordinate.  ``covariates`` picks columns of the
    dataset's covariate matrix.  ``coefficients``, when given, are treated as
    known; otherwise they are fitted by least squares and then plugged in.
    """

    degree: int = 0
    axes: Optional[tuple] = None
    covariates: tuple = ()
    coefficients: Optional[tuple] = None
    label: str = ""

    def design(self, coords, covariates=None):
        coords = _as_coords(coords)
        axes = range(coords.shape[1]) if self.axes is None else self.axes
        cols = [np.ones(coords.shape[0])]
        for power in range(1, self.degree + 1):
            for a in axes:
                cols.append(coords[:, a] ** power)
        if self.covariates:
            if covariates is None:
                raise InputError("trend uses covariates but none were supplied")
            cov = np.asarray(covariates, dtype=float)
            if cov.ndim == 1:
                cov = cov[:, None]
            for k in self.covariates:
                cols.append(cov[:, k])
        return np.column_stack(cols)

    def name(self):
        if self.label:
            return self.label
        parts = [f"degree{self.degree}"]
        if self.axes is not None:
            parts.append("axes" + "".join(str(a) for a in self.axes))
        if self.covariates:
            parts.append("cov" + "".join(str(k) for k in self.covariates))
        return "+".join(parts)


def fit_trend(trend, ds):
    F = trend.design(ds.locations, ds.covariates)
    if trend.coefficients is not None:
        beta = np.asarray(trend.coefficients, dtype=float)
        if beta.size != F.shape[1]:
            raise DimensionMismatchError(
                f"trend has {F.shape[1]} columns but {beta.size} coefficients"
            )
        return beta, F
    sv = np.linalg.svd(F, compute_uv=False)
    if F.shape[0] < F.shape[1] or sv[-1] <= 1e-10 * sv[0]:
        raise NumericalError(f"trend design {trend.name()!r} is rank deficient")
    beta, *_ = np.linalg.lstsq(F, ds.values, rcond=None)
    return beta, F


class KrigingResult(NamedTuple):
    target_kind: str
    means: np.ndarray
    variances: np.ndarray
    percentile_bands: Optional[dict] = None


def _quantile_bands(means, variances, quantiles):
    sd = np.sqrt(variances)
    bands = {}
    for q in quantiles:
        zq = NormalDist().inv_cdf(q)
        bands[q] = means + zq * sd
    return bands


def krige(ds, cf, trend=None, targets=None, target_kind="process",
          target_covariates=None, quantiles=DEFAULT_QUANTILES):
    """Simple kriging with a plug-in trend, for the latent field or for new observations.

    ``target_kind="process"`` predicts ``y(s0)``; the data covariance carries
    the measurement-error variance on its diagonal but the cross-covariance
    does not.  ``target_kind="observable"`` predicts ``z(s0) = y(s0) + eps0``:
    same mean, variance larger by ``meas_var`` away from the data, and the
    datum itself (variance 0) at a data location.
    """
    if target_kind not in ("process", "observable"):
        raise InputError(f"unknown target kind {target_kind!r}")
    trend = trend or TrendSpec()
    t = _as_coords(targets)
    if t.shape[1] != ds.dim:
        raise DimensionMismatchError(f"targets are {t.shape[1]}-d, data are {ds.dim}-d")
    beta, F = fit_trend(trend, ds)
    F0 = trend.design(t, target_covariates)

    sigma = covariance_matrix(ds.locations, cf, check=False)
    sigma[np.diag_indices_from(sigma)] += ds.meas_var
    try:
        factor = linalg.cho_factor(sigma, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("data covariance is singular") from exc
    c0 = cross_covariance(t, ds.locations, cf)
    resid = ds.values - F @ beta
    means = F0 @ beta + c0 @ linalg.cho_solve(factor, resid)
    reduction = np.einsum("ij,ji->i", c0, linalg.cho_solve(factor, c0.T))
    variances = np.clip(cf.sill - reduction, 0.0, None)

    if target_kind == "observable":
        dist = cdist(t, ds.locations, "chebyshev")
        hit = dist <= DUPLICATE_TOL
        at_data = hit.any(axis=1)
        variances = variances + ds.meas_var
        if np.any(at_data):
            idx = np.argmax(hit, axis=1)
            means = np.where(at_data, ds.values[idx], means)
            variances = np.where(at_data, 0.0, variances)

    bands = _quantile_bands(means, variances, quantiles) if quantiles else None
    return KrigingResult(target_kind, means, variances, bands)


def effective_sample_size(locs, cf):
    """``n_eff = sigma^2 / var(zbar)`` for a stationary field observed at ``locs``.

    ``var(zbar) = (sigma^2 + 2 * sum_{i<j} C(s_i - s_j) / n) / n``.
    """
    coords = _as_coords(locs)
    n = coords.shape[0]
    if n == 0:
        raise InputError("empty location set")
    upper = cf.sill * _kernels.exp_corr_upper_sum(coords, float(cf.scale))
    var_mean = (cf.sill + 2.0 * upper / n) / n
    return float(cf.sill / var_mean)


class BlockRegion(NamedTuple):
    """Midpoint cells of a block and the measure of each cell."""

    cells: np.ndarray
    cell_measure: float

    @property
    def volume(self):
        return self.cells.shape[0] * self.cell_measure

    @classmethod
    def grid(cls, lower, upper, spacing):
        """Regular midpoint grid over the box ``[lower, upper]`` with cell side ``spacing``."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise InputError("need lower < upper on every axis")
        if not spacing > 0:
            raise InputError("spacing must be positive")
        axes = []
        for lo, hi in zip(lower, upper):
            k = int(round((hi - lo) / spacing))
            if k < 1 or not np.isclose(k * spacing, hi - lo, rtol=1e-9, atol=0.0):
                raise InputError("box sides must be whole multiples of the spacing")
            axes.append(lo + spacing * (np.arange(k) + 0.5))
        mesh = np.meshgrid(*axes, indexing="ij")
        cells = np.column_stack([m.ravel() for m in mesh])
        return cls(cells, float(spacing) ** lower.size)


def block_average_variance(cf, sigma0_sq, region):
    """var(y(B)) = sigma0^2 + var(delta(B)), with var(delta(B)) by midpoint quadrature.

    ``var(delta(B)) ~ (1/m^2) sum_i sum_j C(s_i - s_j)`` over the ``m`` cells.
    """
    cells = _as_coords(region.cells)
    m = cells.shape[0]
    if m == 0:
        raise InputError("empty region")
    if not sigma0_sq >= 0:
        raise InputError("sigma0_sq must be non-negative")
    total = m * cf.sill + 2.0 * cf.sill * _kernels.exp_corr_upper_sum(cells, float(cf.scale))
    return float(sigma0_sq + total / m ** 2)


def nested_square_regions(sides, spacing, dim=2):
    """Regions ``[0, side]^dim`` sharing a lower corner, so each contains the previous one."""
    return [BlockRegion.grid(np.zeros(dim), np.full(dim, float(s)), spacing) for s in sides]


# --------------------------------------------------------------------------
# fixed/random decomposition audit
# --------------------------------------------------------------------------

class EmpiricalCovariance(NamedTuple):
    lags: np.ndarray      # bin midpoints; lag 0 first
    cov: np.ndarray
    counts: np.ndarray


def empirical_covariance(coords, resid, n_bins=15, max_lag=None):
    """Method-of-moments covariance of mean-zero residuals.

    Lag 0 is ``mean(r^2)`` over all sites; the remaining ``n_bins`` entries
    average ``r_i r_j`` over pairs whose distance falls in equal-width bins
    up to ``max_lag`` (default: half the largest pairwise distance).
    Empty bins hold NaN.
    """
    coords = _as_coords(coords)
    r = np.asarray(resid, dtype=float).reshape(-1)
    r = r - r.mean()
    n = r.size
    c0 = float(np.mean(r * r))
    if n < 2:
        return EmpiricalCovariance(np.zeros(1), np.array([c0]), np.array([n]))
    if max_lag is None:
        max_lag = 0.5 * float(np.max(pdist(coords)))
    edges = np.linspace(0.0, max_lag, int(n_bins) + 1)
    sums, counts = _kernels.binned_cross_products(coords, np.ascontiguousarray(r), edges)
    with np.errstate(invalid="ignore", divide="ignore"):
        cov = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return EmpiricalCovariance(
        np.concatenate([[0.0], mids]),
        np.concatenate([[c0], cov]),
        np.concatenate([[n], counts]),
    )


class AuditRow(NamedTuple):
    model: str
    s_mu2: float
    s_delta2: float
    total: float
    empirical: EmpiricalCovariance


def regional_variance(values):
    """Average squared deviation from the regional average (discrete version)."""
    v = np.asarray(values, dtype=float)
    return float(np.mean((v - v.mean()) ** 2))


def decomposition_audit(ds, mean_models, cf_family="exponential", n_bins=15):
    """Variance split into trend (s_mu^2) and residual (s_delta^2 = C_hat(0)) per mean model."""
    if cf_family != "exponential":
        raise InputError(f"unknown covariance family {cf_family!r}")
    rows = []
    for trend in mean_models:
        beta, F = fit_trend(trend, ds)
        fitted = F @ beta
        emp = empirical_covariance(ds.locations, ds.values - fitted, n_bins=n_bins)
        s_mu2 = regional_variance(fitted)
        s_delta2 = float(emp.cov[0])
        rows.append(AuditRow(trend.name(), s_mu2, s_delta2, s_mu2 + s_delta2, emp))
    return rows


def audit_is_conserving(rows, rtol=0.15):
    """True when every model's total is within ``rtol`` of their common median."""
    totals = np.array([r.total for r in rows])
    ref = np.median(totals)
    return bool(np.all(np.abs(totals - ref) <= rtol * abs(ref)))


# --------------------------------------------------------------------------
# random vs systematic error
# --------------------------------------------------------------------------

class ScalingRow(NamedTuple):
    n: int
    empirical_var: float
    analytic_var: float


def error_scaling_sim(kind, sigma0_sq, sigma_delta_sq, n_grid, reps, seed, chunk_elems=8_000_000):
    """Variance of the average of n errors, simulated across ``reps`` replicates.

    ``kind="random"``: iid errors, analytic ``sigma_delta^2 / n``.
    ``kind="systematic"``: ``e_i = y0 + delta_i`` with a shared ``y0`` of
    variance ``sigma0^2``, analytic ``sigma0^2 + sigma_delta^2 / n``.
    The empirical variance uses divisor ``reps - 1``.
    """
    if kind not in ("random", "systematic"):
        raise InputError(f"unknown error kind {kind!r}")
    reps = int(reps)
    if reps <= 0:
        raise InputError("reps must be positive")
    if reps < 2:
        raise InputError("need at least 2 replicates to estimate a variance")
    n_grid = [int(n) for n in n_grid]
    if any(n < 1 for n in n_grid) or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise InputError("n_grid must be positive and strictly increasing")
    if sigma_delta_sq < 0 or sigma0_sq < 0:
        raise InputError("variances must be non-negative")
    s0 = sigma0_sq if kind == "systematic" else 0.0
    # separate streams so sigma0_sq = 0 reproduces the random kind draw for draw
    delta_seq, y0_seq = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(delta_seq)
    rng_y0 = np.random.default_rng(y0_seq)
    sd = np.sqrt(sigma_delta_sq)
    rows = []
    for n in n_grid:
        means = np.empty(reps)
        per = max(1, chunk_elems // n)
        for start in range(0, reps, per):
            m = min(per, reps - start)
            means[start:start + m] = rng.standard_normal((m, n)).mean(axis=1) * sd
        if kind == "systematic":
            means += np.sqrt(s0) * rng_y0.standard_normal(reps)
        rows.append(ScalingRow(n, float(np.var(means, ddof=1)), float(s0 + sigma_delta_sq / n)))
    return rows


def loglog_slope(rows):
    n = np.log([r.n for r in rows])
    v = np.log([r.empirical_var for r in rows])
    return float(np.polyfit(n, v, 1)[0])
