"""Marginal smoothers that feed the backfitting equations."""

from dataclasses import dataclass

import numpy as np

from .density import estimate_marginals, kernel_weights
from .errors import DataError, DegenerateWindowError, SingularDensityError
from .numerics import GridFn, integrate

DET_RTOL = 1e-14


@dataclass(frozen=True)
class MarginalFit:
    m_check: GridFn
    m_check_slope: GridFn
    m_tilde: GridFn


def _response(y_col, n):
    y = np.asarray(y_col, dtype=float)
    if y.shape != (n,):
        raise DataError(f"response must have {n} values, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise DataError("response has non-finite values")
    return y


def local_linear_marginal(x_col, y_col, bk, marg=None, grid=None):
    """Kernel-weighted least squares line at every grid point.

    Minimises ``sum_i [Y_i - a - b (X_i - x)]^2 K_h(x, X_i)`` and returns
    the intercepts ``a(x)`` and slopes ``b(x)`` as grid functions. With
    ``S_l = n^-1 sum K_h(x, X_i)(X_i - x)^l`` and ``T_l`` the same sums
    weighted by ``Y_i``::

        a = (S2 T0 - S1 T1) / (S0 S2 - S1^2)
        b = (S0 T1 - S1 T0) / (S0 S2 - S1^2)

    ``S0, S1, S2`` are exactly ``p_hat, p_star, p_star2`` of ``marg``.
    """
    if marg is None:
        if grid is None:
            raise DataError("need either marginal densities or a grid")
        marg = estimate_marginals(x_col, bk, grid)
    grid = marg.grid
    W, D = marg.weights, marg.offsets
    n = W.shape[1]
    y = _response(y_col, n)
    s0, s1, s2 = marg.p_hat.values, marg.p_star.values, marg.p_star2.values
    t0 = W @ y / n
    t1 = (W * D) @ y / n
    det = s0 * s2 - s1 * s1
    scale = np.abs(s0 * s2) + s1 * s1
    if np.any(np.abs(det) <= DET_RTOL * scale):
        raise DegenerateWindowError("local linear design is singular at some grid point")
    intercept = (s2 * t0 - s1 * t1) / det
    slope = (s0 * t1 - s1 * t0) / det
    return GridFn(grid, intercept), GridFn(grid, slope)


def normalize(m_check, marg):
    """Shift ``m_check`` so that it integrates to zero against ``p_tilde``."""
    p = marg.p_tilde
    mass = integrate(p)
    if mass <= 0.0:
        raise SingularDensityError("modified density has zero total mass")
    return m_check - integrate(m_check * p) / mass


def marginal_fit(x_col, y_col, bk, marg):
    """Local linear marginal and its normalisation against ``p_tilde``.

    At grid points in ``marg.clip_mask`` the local linear intercept is
    replaced by the local constant one, matching the treatment of the
    pair densities there.
    """
    m_check, slope = local_linear_marginal(x_col, y_col, bk, marg)
    if marg.clipped:
        nw = nw_marginal(x_col, y_col, bk, marg.grid, weights=marg.weights)
        m_check = m_check.with_values(np.where(marg.clip_mask, nw.values, m_check.values))
    return MarginalFit(m_check, slope, normalize(m_check, marg))


def nw_marginal(x_col, y_col, bk, grid, weights=None):
    """Nadaraya-Watson estimate ``sum K_h(x, X_i) Y_i / sum K_h(x, X_i)``.

    ``weights`` overrides the kernel weight matrix (shape ``(m, n)``),
    e.g. with mass-normalised weights for the smooth backfitting baseline.
    """
    if weights is None:
        weights, _ = kernel_weights(x_col, bk, grid)
    n = weights.shape[1]
    y = _response(y_col, n)
    p_hat = weights.sum(axis=1) / n
    if np.any(p_hat <= 0.0):
        raise SingularDensityError("kernel density estimate vanishes on the grid")
    return GridFn(grid, (weights @ y / n) / p_hat)


def noise_weights(marg):
    """Rows ``K_h(x, X_i) / (n p_hat(x))``.

    Applied to the noise vector these give the leading stochastic term of
    the component estimate at each grid point.
    """
    W = marg.weights
    return W / (W.shape[1] * marg.p_hat.values[:, None])
