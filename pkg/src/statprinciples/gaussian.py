"""Dense multivariate-Gaussian primitives.

Everything here is a pure function of its arguments.  Random draws take an
explicit seed and build their own :class:`numpy.random.Generator`.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DegenerateConditioningError, DimensionMismatchError, InputError, NumericalError

SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-10


def symmetrize(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def is_symmetric(a, tol=SYMMETRY_RTOL):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(float(np.max(np.abs(a), initial=0.0)), np.finfo(float).tiny)
    return bool(np.max(np.abs(a - a.T), initial=0.0) <= tol * scale)


def is_psd(a, rtol=PSD_RTOL):
    """True when every eigenvalue of the symmetric part is >= -rtol * lambda_max."""
    a = symmetrize(a)
    if a.size == 0:
        return True
    eig = np.linalg.eigvalsh(a)
    lam_max = max(float(eig[-1]), 0.0)
    return bool(eig[0] >= -rtol * lam_max)


def is_spd(matrix, tol=SYMMETRY_RTOL):
    """Return True iff ``matrix`` is symmetric within ``tol`` and Cholesky succeeds.

    Never raises; anything that cannot be factorized gives False.
    """
    try:
        a = np.asarray(matrix, dtype=float)
    except (TypeError, ValueError):
        return False
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        return False
    if not np.all(np.isfinite(a)) or not is_symmetric(a, tol):
        return False
    try:
        np.linalg.cholesky(symmetrize(a))
    except np.linalg.LinAlgError:
        return False
    return True


def cholesky(a, what="matrix"):
    """Lower Cholesky factor of the symmetric part of ``a``."""
    try:
        return np.linalg.cholesky(symmetrize(a))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{what} is not positive definite") from exc


def spd_inverse(a, what="matrix"):
    c, lower = _cho_factor(a, what)
    return symmetrize(linalg.cho_solve((c, lower), np.eye(c.shape[0])))


def _cho_factor(a, what):
    try:
        return linalg.cho_factor(symmetrize(a), lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"{what} is not positive definite") from exc


@dataclass(frozen=True, eq=False)
class GaussianDist:
    """Multivariate normal N(mean, cov).

    ``cov`` must be symmetric (relative 1e-12) and positive semi-definite
    (eigenvalues no lower than -1e-10 times the largest one).  Zero-variance
    coordinates are allowed.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise InputError("mean must be a vector")
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatchError(
                f"cov has shape {cov.shape}, expected {(mean.size, mean.size)}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InputError("mean and cov must be finite")
        if not is_symmetric(cov):
            raise InputError("cov is not symmetric")
        if not is_psd(cov):
            raise InputError("cov is not positive semi-definite")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size

    @property
    def var(self):
        return np.diag(self.cov).copy()

    def marginal(self, indices):
        idx = _check_indices(indices, self.dim)
        return GaussianDist(self.mean[idx], self.cov[np.ix_(idx, idx)])


def _check_indices(indices, dim):
    idx = np.asarray(list(indices), dtype=int).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= dim):
        raise InputError(f"index out of range for dimension {dim}: {idx.tolist()}")
    if np.unique(idx).size != idx.size:
        raise InputError("observed indices must be distinct")
    return idx


def condition(joint, observed_indices, observed_values):
    """Distribution of the unobserved coordinates given the observed ones.

    Uses the Schur complement: with blocks ``u`` (unobserved) and ``o``,
    ``mean_u + S_uo S_oo^{-1} (x_o - mean_o)`` and
    ``S_uu - S_uo S_oo^{-1} S_ou``.  The result is ordered like the
    unobserved indices in ascending order.

    Raises
    ------
    InputError
        Indices repeated or out of range, or value vector of the wrong length.
    DegenerateConditioningError
        The observed block is not positive definite, or a conditional
        variance comes out below the round-off allowance.
    """
    idx_o = _check_indices(observed_indices, joint.dim)
    x_o = np.atleast_1d(np.asarray(observed_values, dtype=float)).reshape(-1)
    if x_o.size != idx_o.size:
        raise DimensionMismatchError(
            f"{idx_o.size} observed indices but {x_o.size} observed values"
        )
    if idx_o.size == 0:
        return joint
    mask = np.ones(joint.dim, dtype=bool)
    mask[idx_o] = False
    idx_u = np.flatnonzero(mask)

    s_oo = joint.cov[np.ix_(idx_o, idx_o)]
    s_uo = joint.cov[np.ix_(idx_u, idx_o)]
    s_uu = joint.cov[np.ix_(idx_u, idx_u)]
    try:
        factor = linalg.cho_factor(symmetrize(s_oo), lower=True)
    except linalg.LinAlgError as exc:
        raise DegenerateConditioningError("observed covariance block is singular") from exc

    innovation = x_o - joint.mean[idx_o]
    mean = joint.mean[idx_u] + s_uo @ linalg.cho_solve(factor, innovation)
    cov = symmetrize(s_uu - s_uo @ linalg.cho_solve(factor, s_uo.T))
    cov = _clamp_diagonal(cov, s_uu)
    return GaussianDist(mean, cov)


def _clamp_diagonal(cov, prior_block):
    if cov.size == 0:
        return cov
    floor = -PSD_RTOL * max(float(np.max(np.diag(prior_block))), 1.0)
    d = np.diag(cov)
    if np.any(d < floor):
        raise DegenerateConditioningError(
            f"conditional variance {float(d.min())!r} is negative beyond round-off"
        )
    neg = d < 0
    if np.any(neg):
        cov = cov.copy()
        cov[neg, :] = 0.0
        cov[:, neg] = 0.0
    # small negative eigenvalues from cancellation are lifted to zero
    eig, vec = np.linalg.eigh(cov)
    if eig[0] < -PSD_RTOL * max(float(eig[-1]), 0.0):
        eig = np.clip(eig, 0.0, None)
        cov = symmetrize((vec * eig) @ vec.T)
    return cov


def psd_factor(cov):
    """A matrix ``L`` with ``L @ L.T == cov``; Cholesky, or eigen-based for singular PSD input."""
    cov = symmetrize(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eig, vec = np.linalg.eigh(cov)
    lam_max = max(float(eig[-1]), 0.0) if eig.size else 0.0
    if eig.size and eig[0] < -PSD_RTOL * lam_max:
        raise NumericalError("covariance is not positive semi-definite")
    return vec * np.sqrt(np.clip(eig, 0.0, None))


def sample(dist, seed, n):
    """``n`` independent draws from ``dist`` as an ``(n, dim)`` array.

    The same seed always yields the same draws.
    """
    n = int(n)
    if n < 1:
        raise InputError("n must be at least 1")
    factor = psd_factor(dist.cov)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n, dist.dim))
    return dist.mean + eps @ factor.T


def stack(blocks_mean, blocks_cov):
    """Assemble a joint distribution from block means and a nested list of covariance blocks."""
    mean = np.concatenate([np.atleast_1d(np.asarray(m, dtype=float)) for m in blocks_mean])
    cov = np.block([[np.atleast_2d(np.asarray(b, dtype=float)) for b in row] for row in blocks_cov])
    return GaussianDist(mean, cov)
