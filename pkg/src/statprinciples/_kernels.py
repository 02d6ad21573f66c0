"""Pairwise inner loops, with numba and pure-numpy implementations.

The numba versions are used when numba imports and the environment variable
``STATPRINCIPLES_DISABLE_NUMBA`` is unset (or set to ``0``/``false``).  Both
implementations are always importable under their ``*_numba`` / ``*_numpy``
names so the test-suite and ``benchmarks/bench_kernels.py`` can compare them.

All kernels take float64 contiguous arrays; callers in the public modules do
the conversion.
"""

import os

import numpy as np

_FLAG = "STATPRINCIPLES_DISABLE_NUMBA"

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator


def _numba_requested():
    value = os.environ.get(_FLAG, "").strip().lower()
    return value in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and _numba_requested()

# rows of the distance block materialised at once by the numpy fallbacks
_CHUNK = 512


def backend():
    """Name of the active kernel backend: ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# sum_{i<j} exp(-||s_i - s_j|| / scale)
# --------------------------------------------------------------------------

@njit(cache=True)
def exp_corr_upper_sum_numba(coords, scale):
    n, d = coords.shape
    if scale <= 0.0:
        return 0.0
    inv = 1.0 / scale
    total = 0.0
    for i in range(n - 1):
        row = 0.0
        for j in range(i + 1, n):
            r2 = 0.0
            for k in range(d):
                diff = coords[i, k] - coords[j, k]
                r2 += diff * diff
            row += np.exp(-np.sqrt(r2) * inv)
        total += row
    return total


def exp_corr_upper_sum_numpy(coords, scale):
    n = coords.shape[0]
    if scale <= 0.0 or n < 2:
        return 0.0
    total = 0.0
    for start in range(0, n - 1, _CHUNK):
        stop = min(start + _CHUNK, n - 1)
        block = coords[start:stop]
        diff = block[:, None, :] - coords[None, start:, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        corr = np.exp(-dist / scale)
        # keep only j > i inside the block's triangle
        rows = np.arange(stop - start)[:, None]
        cols = np.arange(n - start)[None, :]
        total += float(corr[cols > rows].sum())
    return total


# --------------------------------------------------------------------------
# method-of-moments covariance: per-bin sums of r_i r_j over pairs i<j
# --------------------------------------------------------------------------

@njit(cache=True)
def binned_cross_products_numba(coords, values, edges):
    n, d = coords.shape
    nbins = edges.shape[0] - 1
    sums = np.zeros(nbins)
    counts = np.zeros(nbins, dtype=np.int64)
    lo = edges[0]
    hi = edges[nbins]
    for i in range(n - 1):
        for j in range(i + 1, n):
            r2 = 0.0
            for k in range(d):
                diff = coords[i, k] - coords[j, k]
                r2 += diff * diff
            h = np.sqrt(r2)
            if h < lo or h > hi:
                continue
            # right-closed last bin, matching np.searchsorted(side="right") - 1
            b = np.searchsorted(edges, h, side="right") - 1
            if b >= nbins:
                b = nbins - 1
            sums[b] += values[i] * values[j]
            counts[b] += 1
    return sums, counts


def binned_cross_products_numpy(coords, values, edges):
    n = coords.shape[0]
    nbins = edges.shape[0] - 1
    sums = np.zeros(nbins)
    counts = np.zeros(nbins, dtype=np.int64)
    for start in range(0, max(n - 1, 0), _CHUNK):
        stop = min(start + _CHUNK, n - 1)
        ii, jj = [], []
        for i in range(start, stop):
            j = np.arange(i + 1, n)
            ii.append(np.full(j.shape, i))
            jj.append(j)
        ii = np.concatenate(ii)
        jj = np.concatenate(jj)
        diff = coords[ii] - coords[jj]
        h = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        keep = (h >= edges[0]) & (h <= edges[-1])
        b = np.searchsorted(edges, h[keep], side="right") - 1
        b = np.minimum(b, nbins - 1)
        prod = values[ii[keep]] * values[jj[keep]]
        sums += np.bincount(b, weights=prod, minlength=nbins)
        counts += np.bincount(b, minlength=nbins)
    return sums, counts


# --------------------------------------------------------------------------
# concordant / discordant pair counts of a two-way ordinal table
# --------------------------------------------------------------------------

@njit(cache=True)
def concordance_counts_numba(table):
    r, c = table.shape
    # below[i, j] = sum of table[k, l] with k > i and l > j
    below = np.zeros((r + 1, c + 1))
    for i in range(r - 1, -1, -1):
        for j in range(c - 1, -1, -1):
            below[i, j] = table[i, j] + below[i + 1, j] + below[i, j + 1] - below[i + 1, j + 1]
    # left[i, j] = sum of table[k, l] with k > i and l < j
    left = np.zeros((r + 1, c + 1))
    for i in range(r - 1, -1, -1):
        for j in range(c):
            left[i, j + 1] = table[i, j] + left[i + 1, j + 1] + left[i, j] - left[i + 1, j]
    conc = 0.0
    disc = 0.0
    for i in range(r):
        for j in range(c):
            n = table[i, j]
            if n == 0.0:
                continue
            conc += n * below[i + 1, j + 1]
            disc += n * left[i + 1, j]
    return conc, disc


def concordance_counts_numpy(table):
    # reverse cumulative sums give the "strictly below-right" and
    # "strictly below-left" mass for every cell
    rev = table[::-1, ::-1].cumsum(0).cumsum(1)[::-1, ::-1]
    below = np.zeros((table.shape[0] + 1, table.shape[1] + 1))
    below[:-1, :-1] = rev
    left_cum = table[::-1, :].cumsum(0)[::-1, :].cumsum(1)
    left = np.zeros((table.shape[0] + 1, table.shape[1] + 1))
    left[:-1, 1:] = left_cum
    conc = float((table * below[1:, 1:]).sum())
    disc = float((table * left[1:, :-1]).sum())
    return conc, disc


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

if USE_NUMBA:
    exp_corr_upper_sum = exp_corr_upper_sum_numba
    binned_cross_products = binned_cross_products_numba
    concordance_counts = concordance_counts_numba
else:
    exp_corr_upper_sum = exp_corr_upper_sum_numpy
    binned_cross_products = binned_cross_products_numpy
    concordance_counts = concordance_counts_numpy
