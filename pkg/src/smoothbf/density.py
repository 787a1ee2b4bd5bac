"""Marginal and pairwise kernel density estimates on grids.

The marginal quantities are the local moments of the K-type kernel
weights,

    p_hat(x)   = n^-1 sum_i K_h(x, X_i)
    p_star(x)  = n^-1 sum_i K_h(x, X_i) (X_i - x)
    p_star2(x) = n^-1 sum_i K_h(x, X_i) (X_i - x)^2

and the modified density is ``p_tilde = p_hat - p_star^2 / p_star2``.
Pair tables combine K-type weights in ``x_j`` with L-type weights in
``x_k``; the transition kernel is the centred ratio of the modified pair
density to the modified marginal.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateWindowError, SingularDensityError
from .kernels import CORRECTED, BoundaryKernel
from .numerics import GridFn, GridFn2, integrate

CLIP_FRACTION = 0.01
MAX_CORRECTION = 0.5


@dataclass(frozen=True)
class MarginalDensities:
    p_hat: GridFn
    p_star: GridFn
    p_star2: GridFn
    p_tilde: GridFn
    p_tilde_raw: GridFn
    clipped: bool
    clip_mask: np.ndarray = field(repr=False)
    # K-type weights K_h(grid_i, X_l) and offsets X_l - grid_i, shape (m, n)
    weights: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)

    @property
    def grid(self):
        return self.p_hat.grid


@dataclass(frozen=True)
class PairDensities:
    p_hat_jk: GridFn2
    p_star_jk: GridFn2
    p_tilde_jk: GridFn2


@dataclass(frozen=True)
class TransitionKernel:
    pi_jk: GridFn2

    @property
    def values(self):
        return self.pi_jk.values


def _check_column(x, kernel, what="covariate"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DataError(f"{what} column must be a non-empty 1-d array")
    if x.size < 2:
        raise DataError(f"need at least 2 observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{what} column has non-finite values")
    tol = 1e-12 * (kernel.hi - kernel.lo)
    if np.any((x < kernel.lo - tol) | (x > kernel.hi + tol)):
        raise DataError(f"{what} values outside [{kernel.lo}, {kernel.hi}]")
    return x


def kernel_weights(x_col, bk, grid):
    """K-type weight matrix ``K_h(grid_i, X_l)`` and offsets ``X_l - grid_i``."""
    x = _check_column(x_col, bk)
    u = grid.points
    return bk(u, x), x[None, :] - u[:, None]


def expected_ratio(bk, x):
    """Large-sample limit of ``p_tilde / p_hat`` at ``x``.

    With kernel moments ``nu_l`` this is ``1 - nu_1^2 / (nu_0 nu_2)``: one
    everywhere for corrected kernels and below one near the edges for
    conventional ones.
    """
    x = np.asarray(x, dtype=float)
    if bk.mode == CORRECTED:
        return np.ones_like(x)
    m0, m1, m2 = (bk.mu(x, ell) for ell in (0, 1, 2))
    return 1.0 - m1 * m1 / (m0 * m2)


def estimate_marginals(x_col, bk, grid, clip=True):
    """Estimate ``p_hat``, ``p_star``, ``p_star2`` and ``p_tilde`` on ``grid``.

    With ``clip=True``, grid points where ``p_tilde`` falls below one
    percent of its average height, or where ``p_tilde / p_hat`` is off
    :func:`expected_ratio` by more than one half, are marked in
    ``clip_mask`` and get the unmodified ``p_hat`` (but at least the
    floor). The local linear correction is then dropped at those points:
    :func:`estimate_pair` uses the plain density ratio in their rows, and
    :func:`smoothbf.marginal.marginal_fit` the local constant fit.

    Raises
    ------
    DegenerateWindowError
        If ``p_hat`` is not positive or ``p_star2`` vanishes at some grid
        point.
    """
    W, D = kernel_weights(x_col, bk, grid)
    n = W.shape[1]
    p_hat = W.sum(axis=1) / n
    p_star = (W * D).sum(axis=1) / n
    p_star2 = (W * D * D).sum(axis=1) / n
    # p_star2 is negative near the edges with corrected kernels (the
    # boundary second-moment constant changes sign); only zero is fatal.
    bad = (p_hat <= 0.0) | (np.abs(p_star2) <= 1e-14 * bk.h**2 * np.abs(p_hat))
    if np.any(bad):
        bad = grid.points[bad]
        raise DegenerateWindowError(
            f"kernel window holds too little data near x = {bad[:3]} "
            f"(bandwidth {bk.h:g} too small for the design)"
        )
    p_tilde_raw = p_hat - p_star**2 / p_star2
    p_tilde = p_tilde_raw
    mask = np.zeros(grid.m, dtype=bool)
    if clip:
        # Away from the population ratio only where p** passes through
        # zero near an edge (corrected kernels).
        correction = np.abs(p_tilde_raw - expected_ratio(bk, grid.points) * p_hat)
        wild = correction > MAX_CORRECTION * p_hat
        # the floor's reference mass must not include the wild points
        mass = grid.weights @ np.where(wild, p_hat, p_tilde_raw)
        if mass <= 0.0:
            raise SingularDensityError("modified density has nonpositive total mass")
        floor = CLIP_FRACTION * mass / grid.length
        mask = wild | (p_tilde_raw < floor)
        p_tilde = np.where(mask, np.maximum(p_hat, floor), p_tilde_raw)
    return MarginalDensities(
        p_hat=GridFn(grid, p_hat),
        p_star=GridFn(grid, p_star),
        p_star2=GridFn(grid, p_star2),
        p_tilde=GridFn(grid, p_tilde),
        p_tilde_raw=GridFn(grid, p_tilde_raw),
        clipped=bool(mask.any()),
        clip_mask=mask,
        weights=W,
        offsets=D,
    )


def grid_kernel(bl, grid):
    """L-type kernel whose moments use the trapezoid rule on ``grid``.

    Conventional kernels carry no correction and are returned unchanged.
    """
    if bl.mode == CORRECTED and bl.grid is None:
        return bl.on_grid(grid)
    return bl


def estimate_pair(x_j_col, x_k_col, bk_j, bl_k, grid_j, grid_k, marg_j=None):
    """Pair tables ``p_hat_jk``, ``p_star_jk`` and ``p_tilde_jk``.

    ``x_j`` is smoothed with the K-type kernel and ``x_k`` with the L-type
    kernel. Pass the already estimated ``marg_j`` so that the j-marginal
    factors are exactly the ones used for ``p_tilde_j``; otherwise they are
    recomputed with ``bk_j`` on ``grid_j``.
    """
    if marg_j is None:
        marg_j = estimate_marginals(x_j_col, bk_j, grid_j)
    elif marg_j.grid != grid_j:
        raise DataError("marginal densities live on a different grid")
    xk = _check_column(x_k_col, bl_k)
    W = marg_j.weights
    if W.shape[1] != xk.size:
        raise DataError("covariate columns differ in length")
    n = xk.size
    Lw = grid_kernel(bl_k, grid_k)(grid_k.points, xk)
    p_hat_jk = W @ Lw.T / n
    p_star_jk = (W * marg_j.offsets) @ Lw.T / n
    ratio = marg_j.p_star.values / marg_j.p_star2.values
    p_tilde_jk = p_hat_jk - p_star_jk * ratio[:, None]
    if marg_j.clipped:
        # Clipped rows revert to the plain conditional density
        # p_hat_jk / p_hat_j, rescaled to the clipped mass.
        rows = marg_j.clip_mask
        scale = marg_j.p_tilde.values[rows] / marg_j.p_hat.values[rows]
        p_tilde_jk[rows] = p_hat_jk[rows] * scale[:, None]
    return PairDensities(
        GridFn2(grid_j, grid_k, p_hat_jk),
        GridFn2(grid_j, grid_k, p_star_jk),
        GridFn2(grid_j, grid_k, p_tilde_jk),
    )


def centered_ratio(table, dens):
    """``table / dens - int table(u, .) du / int dens`` on the grid."""
    g = dens.grid
    p = dens.values
    if np.any(p <= 0.0):
        raise SingularDensityError("density in the transition kernel is not positive")
    col = g.weights @ table.values
    return GridFn2(table.grid_a, table.grid_b,
                   table.values / p[:, None] - col[None, :] / integrate(dens))


def pi_jk(pair, marg_j):
    """Transition kernel ``p~_jk / p~_j - int p~_jk(u, .) du / int p~_j``.

    Rows integrate to zero in ``x_k`` (corrected kernels) and columns
    integrate to zero against ``p~_j``.
    """
    return TransitionKernel(centered_ratio(pair.p_tilde_jk, marg_j.p_tilde))


def mass_normalized_weights(bk, grid, v_col):
    """Base-kernel weights rescaled to unit grid mass in their first argument.

    This is the boundary convention of Nadaraya-Watson smooth backfitting:
    ``int_I K*_h(u, v) du = 1`` for every data point ``v``. Conventional
    mode returns the plain scaled kernel.
    """
    v = _check_column(v_col, bk)
    plain = BoundaryKernel(bk.kernel, bk.h, bk.lo, bk.hi, "K", "conventional")
    W = plain(grid.points, v)
    if bk.mode == CORRECTED:
        W = W / (grid.weights @ W)[None, :]
    return W
