"""Lurking-variable diagnostics: trivariate Gaussian algebra, ordinal gamma, MAUP."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import DegenerateConditioningError, DimensionMismatchError, InputError

PSD_TOL = -1e-12


@dataclass(frozen=True)
class TriCorrelation:
    """Pairwise correlations of standardized (w, x, y)."""

    rho_xy: float
    rho_wy: float
    rho_xw: float

    def __post_init__(self):
        for name in ("rho_xy", "rho_wy", "rho_xw"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise InputError(f"{name}={v!r} outside [-1, 1]")
        # leading principal minors of the (w, x, y) correlation matrix
        m2 = 1.0 - self.rho_xw ** 2
        m3 = float(np.linalg.det(self.matrix()))
        if m2 < PSD_TOL or m3 < PSD_TOL:
            raise InputError("correlations do not form a positive semi-definite matrix")

    def matrix(self):
        """Correlation matrix ordered (w, x, y)."""
        return np.array([
            [1.0, self.rho_xw, self.rho_wy],
            [self.rho_xw, 1.0, self.rho_xy],
            [self.rho_wy, self.rho_xy, 1.0],
        ])


def conditional_correlation(tc):
    """corr(x, y | w) = (rho_xy - rho_wy rho_xw) / sqrt((1 - rho_xw^2)(1 - rho_wy^2))."""
    if abs(tc.rho_xw) >= 1.0 or abs(tc.rho_wy) >= 1.0:
        raise DegenerateConditioningError("w is perfectly correlated with x or y")
    r = (tc.rho_xy - tc.rho_wy * tc.rho_xw) / np.sqrt((1.0 - tc.rho_xw ** 2) * (1.0 - tc.rho_wy ** 2))
    return float(min(max(r, -1.0), 1.0))


def partial_regression(tc):
    """Coefficients ``(coef_w, coef_x)`` of E(y | x, w) for standardized variables."""
    denom = 1.0 - tc.rho_xw ** 2
    if abs(tc.rho_xw) >= 1.0:
        raise DegenerateConditioningError("x and w are collinear")
    coef_w = (tc.rho_wy - tc.rho_xy * tc.rho_xw) / denom
    coef_x = (tc.rho_xy - tc.rho_wy * tc.rho_xw) / denom
    return float(coef_w), float(coef_x)


def _as_table(table):
    t = np.asarray(table, dtype=float)
    if t.ndim != 2:
        raise InputError("expected a two-way table")
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise InputError("counts must be finite and non-negative")
    return np.ascontiguousarray(t)


def concordance(table):
    """Concordant and discordant pair counts ``(C, D)`` of an ordinal table."""
    return _kernels.concordance_counts(_as_table(table))


def goodman_kruskal_gamma(table):
    """(C - D) / (C + D) over pairs of data in different rows and columns.

    Rows and columns are taken in increasing ordinal order.
    """
    conc, disc = concordance(table)
    if conc + disc == 0:
        raise InputError("gamma is undefined: no concordant or discordant pairs")
    return float((conc - disc) / (conc + disc))


@dataclass(frozen=True, eq=False)
class Table3D:
    """Counts indexed (w-bin, x-bin, y-bin), with optional bin edges per axis."""

    counts: np.ndarray
    edges: tuple = ()

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 3:
            raise InputError("Table3D needs a 3-d count array")
        if np.any(c < 0):
            raise InputError("counts must be non-negative")
        if not np.any(c > 0):
            raise InputError("table has no positive count")
        if not np.all(np.equal(np.mod(c, 1), 0)):
            raise InputError("counts must be integers")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @classmethod
    def from_samples(cls, w, x, y, edges):
        """Bin samples with caller-supplied edges ``(w_edges, x_edges, y_edges)``."""
        sample = np.column_stack([np.asarray(v, dtype=float) for v in (w, x, y)])
        counts, _ = np.histogramdd(sample, bins=[np.asarray(e, dtype=float) for e in edges])
        return cls(counts.astype(np.int64), tuple(np.asarray(e, dtype=float) for e in edges))


def marginalize(t):
    """Two-way (x, y) table obtained by summing over the w axis."""
    return t.counts.sum(axis=0)


class SliceGammas(NamedTuple):
    per_slice: list
    marginal: float


def simpson_gammas(t):
    """Gamma within each w-slice (NaN where undefined) and for the marginal table."""
    per = []
    for k in range(t.counts.shape[0]):
        try:
            per.append(goodman_kruskal_gamma(t.counts[k]))
        except InputError:
            per.append(float("nan"))
    return SliceGammas(per, goodman_kruskal_gamma(marginalize(t)))


class MaupRow(NamedTuple):
    level: float
    n_blocks: int
    correlation: float


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    if den == 0 or not np.isfinite(den):
        return float("nan")
    return float(np.clip((a @ b) / den, -1.0, 1.0))


def block_average(locations, values, cell_size, origin=None):
    """Average ``values`` (n, k) within square grid cells of side ``cell_size``.

    Returns the occupied cell keys and the (n_blocks, k) block means, in
    lexicographic cell order.
    """
    loc = np.asarray(locations, dtype=float)
    if loc.ndim == 1:
        loc = loc[:, None]
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if origin is None:
        origin = loc.min(axis=0)
    keys = np.floor((loc - origin) / cell_size + 1e-9).astype(np.int64)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    counts = np.bincount(inv)
    means = np.column_stack([np.bincount(inv, weights=vals[:, j]) / counts for j in range(vals.shape[1])])
    return uniq, means


def maup_scan(locations, x, y, levels, origin=None):
    """Correlation of block-averaged ``x`` and ``y`` at each aggregation cell size.

    A level where x or y has no spread across blocks reports NaN.

    Raises
    ------
    InputError
        If a level leaves fewer than two non-empty blocks.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    loc = np.asarray(locations, dtype=float)
    if loc.ndim == 1:
        loc = loc[:, None]
    if not (loc.shape[0] == x.size == y.size):
        raise DimensionMismatchError("locations, x and y differ in length")
    if origin is None:
        origin = loc.min(axis=0)
    rows = []
    for level in levels:
        if not level > 0:
            raise InputError("aggregation cell size must be positive")
        _, means = block_average(loc, np.column_stack([x, y]), level, origin)
        if means.shape[0] < 2:
            raise InputError(f"level {level!r} leaves fewer than 2 non-empty blocks")
        rows.append(MaupRow(float(level), int(means.shape[0]), _pearson(means[:, 0], means[:, 1])))
    return rows
