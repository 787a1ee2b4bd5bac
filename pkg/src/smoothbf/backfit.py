"""Smooth backfitting: the fixed-point solver, normings and bias theory.

Each component solves

    m_j(x_j) = m~_j(x_j) - sum_{k != j} int m_k(x_k) pi_jk(x_j, x_k) dx_k

where ``m~_j`` is a centred marginal smoother and ``pi_jk`` a centred
transition kernel. :func:`fit` uses local linear marginals with the
modified densities; :func:`fit_nw_baseline` uses Nadaraya-Watson
marginals with ordinary kernel density ratios.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import density as dens
from .errors import (ConfigError, DataError, DomainError, NonConvergence,
                     SingularDensityError)
from .kernels import CORRECTED, KERNEL_MODES, BoundaryKernel, Biweight, C_K_ell, make_L
from .marginal import marginal_fit, nw_marginal
from .numerics import DEFAULT_GRID_SIZE, Grid1D, GridFn, GridFn2, eval_at, integrate

PTILDE = "ptilde"
PHAT = "phat"
SAMPLE_MEAN = "sample-mean"
NORMINGS = (PTILDE, PHAT, SAMPLE_MEAN)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_SWEEPS = 200


@dataclass(frozen=True)
class BackfitSystem:
    """Precomputed ingredients of the backfitting equations.

    ``pi[(j, k)]`` is the ``(m_j, m_k)`` transition table; ``centering[j]``
    is the density the fixed point is centred against.
    """

    grids: tuple
    m_tilde: tuple
    pi: dict = field(repr=False)
    centering: tuple = field(repr=False)
    p_hat: tuple = field(repr=False)
    clipped: bool = False

    @property
    def d(self):
        return len(self.grids)

    def operators(self):
        """Matrices ``A_jk = pi_jk * trapezoid weights of grid k``."""
        return {(j, k): P * self.grids[k].weights[None, :]
                for (j, k), P in self.pi.items()}


@dataclass(frozen=True)
class AdditiveFit:
    intercept: float
    components: tuple
    norming: str
    sweeps: int
    final_residual: float
    residuals: tuple = ()
    warnings: tuple = ()
    bandwidths: tuple = ()
    kernel_mode: str = CORRECTED
    p_tilde: tuple = field(default=(), repr=False)
    p_hat: tuple = field(default=(), repr=False)
    X: np.ndarray = field(default=None, repr=False)

    @property
    def d(self):
        return len(self.components)

    @property
    def grids(self):
        return tuple(c.grid for c in self.components)

    def __call__(self, x):
        return predict(self, x)


@dataclass(frozen=True)
class ComponentTruth:
    """True component and design density with the derivatives the bias
    expansion needs. All callables must be vectorised."""

    m: object
    m_dd: object
    p: object
    p_d: object
    p_dd: object


@dataclass(frozen=True)
class BiasDiagnostics:
    Delta: tuple
    Delta_plus: tuple
    Delta_plusplus: tuple
    interior_bias_curve: tuple
    norming: str = SAMPLE_MEAN


def _validate(X, y, intervals):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DataError("covariates must be an (n, d) array")
    n, d = X.shape
    if d < 1:
        raise DataError("need at least one covariate")
    if n < d + 2:
        raise DataError(f"need n >= d + 2 observations, got n={n}, d={d}")
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise DataError(f"response must have shape ({n},), got {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("data contain non-finite values")
    if intervals is None:
        intervals = [(float(X[:, j].min()), float(X[:, j].max())) for j in range(d)]
    intervals = [tuple(map(float, iv)) for iv in intervals]
    if len(intervals) != d:
        raise ConfigError(f"need {d} intervals, got {len(intervals)}")
    for j, (lo, hi) in enumerate(intervals):
        tol = 1e-12 * (hi - lo)
        if np.any((X[:, j] < lo - tol) | (X[:, j] > hi + tol)):
            raise DataError(f"covariate {j} has values outside [{lo}, {hi}]")
    return X, y, intervals


def _bandwidths(bandwidths, d):
    h = np.atleast_1d(np.asarray(bandwidths, dtype=float))
    if h.size == 1 and d > 1:
        h = np.repeat(h, d)
    if h.size != d:
        raise ConfigError(f"need {d} bandwidths, got {h.size}")
    return tuple(float(v) for v in h)


def _setup(X, y, bandwidths, intervals, kernel_mode, grid_size, kernel):
    if kernel_mode not in KERNEL_MODES:
        raise ConfigError(f"kernel mode must be one of {KERNEL_MODES}, got {kernel_mode!r}")
    X, y, intervals = _validate(X, y, intervals)
    d = X.shape[1]
    h = _bandwidths(bandwidths, d)
    kernel = kernel or Biweight()
    grids = tuple(Grid1D(lo, hi, grid_size) for lo, hi in intervals)
    bks = tuple(BoundaryKernel(kernel, h[j], *intervals[j], "K", kernel_mode)
                for j in range(d))
    return X, y, h, kernel, grids, bks


def build_system(X, y_centered, bks, grids, clip=True):
    """Marginal local linear fits and transition kernels for every pair."""
    d = len(bks)
    L = make_L(bks[0].kernel)
    bls = [BoundaryKernel(L, bk.h, bk.lo, bk.hi, "L", bk.mode) for bk in bks]
    margs = [dens.estimate_marginals(X[:, j], bks[j], grids[j], clip=clip)
             for j in range(d)]
    m_tilde = tuple(marginal_fit(X[:, j], y_centered, bks[j], margs[j]).m_tilde
                    for j in range(d))
    pi = {}
    for j in range(d):
        for k in range(d):
            if k == j:
                continue
            pair = dens.estimate_pair(X[:, j], X[:, k], bks[j], bls[k],
                                      grids[j], grids[k], marg_j=margs[j])
            pi[(j, k)] = dens.pi_jk(pair, margs[j]).values
    return BackfitSystem(
        grids=tuple(grids),
        m_tilde=m_tilde,
        pi=pi,
        centering=tuple(m.p_tilde for m in margs),
        p_hat=tuple(m.p_hat for m in margs),
        clipped=any(m.clipped for m in margs),
    )


def build_nw_system(X, y_centered, bks, grids):
    """Nadaraya-Watson smooth backfitting ingredients.

    Both arguments of the pair density are smoothed with kernels of unit
    mass over the grid (plain kernels in conventional mode), so that
    ``int p_hat_jk dx_k = p_hat_j`` and the centred ratio keeps the
    components centred against ``p_hat_j``.
    """
    d = len(bks)
    weights = [dens.mass_normalized_weights(bks[j], grids[j], X[:, j]) for j in range(d)]
    n = X.shape[0]
    p_hat = []
    m_tilde = []
    for j in range(d):
        p = GridFn(grids[j], weights[j].sum(axis=1) / n)
        if np.any(p.values <= 0.0):
            raise SingularDensityError("kernel density estimate vanishes on the grid")
        p_hat.append(p)
        m = nw_marginal(X[:, j], y_centered, bks[j], grids[j], weights=weights[j])
        m_tilde.append(m - integrate(m * p) / integrate(p))
    pi = {}
    for j in range(d):
        for k in range(d):
            if k != j:
                table = GridFn2(grids[j], grids[k], weights[j] @ weights[k].T / n)
                pi[(j, k)] = dens.centered_ratio(table, p_hat[j]).values
    return BackfitSystem(tuple(grids), tuple(m_tilde), pi, tuple(p_hat), tuple(p_hat))


def gauss_seidel(system, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS):
    """Iterate the backfitting equations from zero in the order j = 1..d.

    Returns ``(components, residuals)`` where ``residuals[s]`` is the
    largest sup-norm change of any component during sweep ``s``.
    ``tol`` is absolute; :func:`fit` scales it by the response size.

    Raises
    ------
    NonConvergence
        If the change is still above ``tol`` after ``max_sweeps`` sweeps.
    """
    d = system.d
    comps = [np.zeros(g.m) for g in system.grids]
    if d == 1:
        return [system.m_tilde[0].values.copy()], [0.0]
    ops = system.operators()
    residuals = []
    for _ in range(max_sweeps):
        change = 0.0
        for j in range(d):
            new = system.m_tilde[j].values.copy()
            for k in range(d):
                if k != j:
                    new -= ops[(j, k)] @ comps[k]
            change = max(change, float(np.max(np.abs(new - comps[j]))))
            comps[j] = new
        residuals.append(change)
        if change <= tol:
            return comps, residuals
    raise NonConvergence(
        f"backfitting did not converge in {max_sweeps} sweeps "
        f"(last change {residuals[-1]:.3g}, tolerance {tol:.3g})",
        residuals,
    )


def solve_direct(system):
    """Exact discrete fixed point from one dense linear solve.

    Stacks all components into one vector and solves
    ``(I + A) m = m~`` with the block operator ``A`` built from the
    transition tables and trapezoid weights.
    """
    sizes = [g.m for g in system.grids]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    N = int(offsets[-1])
    A = np.eye(N)
    for (j, k), op in system.operators().items():
        A[offsets[j]:offsets[j + 1], offsets[k]:offsets[k + 1]] += op
    rhs = np.concatenate([m.values for m in system.m_tilde])
    sol = np.linalg.solve(A, rhs)
    return [GridFn(g, sol[offsets[j]:offsets[j + 1]]) for j, g in enumerate(system.grids)]


def _finish(system, comps, residuals, intercept, X, h, kernel_mode, norming, max_sweeps,
            natural):
    warnings = []
    if system.clipped:
        warnings.append("clipping")
    if len(residuals) > max_sweeps // 2:
        warnings.append("slow-convergence")
    result = AdditiveFit(
        intercept=intercept,
        components=tuple(GridFn(g, c) for g, c in zip(system.grids, comps)),
        norming=natural,
        sweeps=len(residuals),
        final_residual=float(residuals[-1]),
        residuals=tuple(residuals),
        warnings=tuple(warnings),
        bandwidths=h,
        kernel_mode=kernel_mode,
        p_tilde=system.centering,
        p_hat=system.p_hat,
        X=X,
    )
    return apply_norming(result, norming)


def fit(X, y, bandwidths, intervals=None, kernel_mode=CORRECTED, norming=SAMPLE_MEAN,
        grid_size=DEFAULT_GRID_SIZE, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS,
        kernel=None, clip=True):
    """Fit the additive model with local linear smooth backfitting updates.

    Parameters
    ----------
    X : array, shape (n, d)
    y : array, shape (n,)
    bandwidths : float or sequence of d floats
    intervals : sequence of (lo, hi), optional
        Supports of the covariates; column ranges when omitted.
    kernel_mode : {"corrected", "conventional"}
    norming : {"ptilde", "phat", "sample-mean"}
    grid_size : int
        Points per component grid.
    tol : float
        Convergence threshold relative to ``1 + max|y|``.
    max_sweeps : int
    kernel : Kernel, optional
        Base kernel, biweight by default.
    clip : bool
        Floor the modified densities instead of failing on them.

    Returns
    -------
    AdditiveFit
    """
    if norming not in NORMINGS:
        raise ConfigError(f"norming must be one of {NORMINGS}, got {norming!r}")
    X, y, h, kernel, grids, bks = _setup(X, y, bandwidths, intervals, kernel_mode,
                                         grid_size, kernel)
    intercept = float(np.mean(y))
    system = build_system(X, y - intercept, bks, grids, clip=clip)
    comps, residuals = gauss_seidel(system, tol * (1.0 + np.max(np.abs(y))), max_sweeps)
    return _finish(system, comps, residuals, intercept, X, h, kernel_mode, norming,
                   max_sweeps, PTILDE)


def fit_nw_baseline(X, y, bandwidths, intervals=None, kernel_mode=CORRECTED,
                    norming=SAMPLE_MEAN, grid_size=DEFAULT_GRID_SIZE, tol=DEFAULT_TOL,
                    max_sweeps=DEFAULT_MAX_SWEEPS, kernel=None):
    """Nadaraya-Watson smooth backfitting with the same interface as :func:`fit`.

    The natural norming of the baseline is against ``p_hat``.
    """
    if norming not in NORMINGS:
        raise ConfigError(f"norming must be one of {NORMINGS}, got {norming!r}")
    X, y, h, kernel, grids, bks = _setup(X, y, bandwidths, intervals, kernel_mode,
                                         grid_size, kernel)
    intercept = float(np.mean(y))
    system = build_nw_system(X, y - intercept, bks, grids)
    comps, residuals = gauss_seidel(system, tol * (1.0 + np.max(np.abs(y))), max_sweeps)
    return _finish(system, comps, residuals, intercept, X, h, kernel_mode, norming,
                   max_sweeps, PHAT)


def norming_shift(component, target, p_tilde=None, p_hat=None, x_col=None):
    """Constant to subtract from ``component`` to satisfy ``target``."""
    if target == PTILDE:
        return integrate(component * p_tilde) / integrate(p_tilde)
    if target == PHAT:
        return integrate(component * p_hat) / integrate(p_hat)
    if target == SAMPLE_MEAN:
        return float(np.mean(eval_at(component, x_col)))
    raise ConfigError(f"norming must be one of {NORMINGS}, got {target!r}")


def apply_norming(fit, target, X=None):
    """Recentre every component by ``target``; the intercept absorbs the shift
    so predictions do not change."""
    if target not in NORMINGS:
        raise ConfigError(f"norming must be one of {NORMINGS}, got {target!r}")
    X = fit.X if X is None else np.asarray(X, dtype=float).reshape(-1, fit.d)
    if target == SAMPLE_MEAN and X is None:
        raise DataError("sample-mean norming needs the covariate data")
    comps = []
    intercept = fit.intercept
    for j, c in enumerate(fit.components):
        shift = norming_shift(
            c, target,
            p_tilde=fit.p_tilde[j] if fit.p_tilde else None,
            p_hat=fit.p_hat[j] if fit.p_hat else None,
            x_col=None if X is None else X[:, j],
        )
        comps.append(c - shift)
        intercept += shift
    return replace(fit, components=tuple(comps), intercept=float(intercept), norming=target)


def predict(fit, x):
    """``m0 + sum_j m_j(x_j)`` for one point (d,) or many points (N, d)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x) if single else x
    if pts.shape[-1] != fit.d:
        raise DataError(f"expected {fit.d} coordinates, got {pts.shape[-1]}")
    out = np.full(pts.shape[0], fit.intercept)
    for j, c in enumerate(fit.components):
        try:
            out += np.atleast_1d(eval_at(c, pts[:, j]))
        except DomainError as exc:
            raise DomainError(f"coordinate {j}: {exc}") from None
    return float(out[0]) if single else out


def bias_diagnostics(truths, bandwidths, intervals, kernel=None, kernel_mode=CORRECTED,
                     norming=SAMPLE_MEAN, grid_size=DEFAULT_GRID_SIZE, quad_points=4001):
    """Leading-order bias constants and curves of the backfitting estimate.

    For each component, with ``C_K = int t^2 K`` and the true component
    recentred so that ``int m p = 0``::

        Delta    = -C_K/2 [int m p'' - 2 int m p'^2/p + int m'' p]
        Delta_+  = -C_K/2 [int m p'' + int m'' p]
        Delta_++ = -C_K/2  int m'' p

    and the bias curve ``h^2 [C_{K,2}(x) m''(x) / 2 + Delta_norming]``, where
    ``C_{K,2}`` equals ``C_K`` at interior points.
    """
    kernel = kernel or Biweight()
    ck = kernel.second_moment
    d = len(truths)
    h = _bandwidths(bandwidths, d)
    D, Dp, Dpp, curves = [], [], [], []
    for j, tr in enumerate(truths):
        lo, hi = intervals[j]
        fg = Grid1D(lo, hi, quad_points)
        u, w = fg.points, fg.weights
        p, p1, p2 = (np.broadcast_to(f(u), u.shape) for f in (tr.p, tr.p_d, tr.p_dd))
        m = np.broadcast_to(tr.m(u), u.shape)
        m = m - (w @ (m * p)) / (w @ p)
        mdd = np.broadcast_to(tr.m_dd(u), u.shape)
        i_mp2 = w @ (m * p2)
        i_mp1 = w @ (m * p1**2 / p)
        i_mddp = w @ (mdd * p)
        D.append(-0.5 * ck * (i_mp2 - 2.0 * i_mp1 + i_mddp))
        Dp.append(-0.5 * ck * (i_mp2 + i_mddp))
        Dpp.append(-0.5 * ck * i_mddp)
        delta = {PTILDE: D[-1], PHAT: Dp[-1], SAMPLE_MEAN: Dpp[-1]}[norming]
        grid = Grid1D(lo, hi, grid_size)
        bk = BoundaryKernel(kernel, h[j], lo, hi, "K", kernel_mode)
        ck2 = C_K_ell(bk, grid.points, 2)
        curves.append(GridFn(grid, h[j] ** 2 * (0.5 * ck2 * tr.m_dd(grid.points) + delta)))
    return BiasDiagnostics(tuple(D), tuple(Dp), tuple(Dpp), tuple(curves), norming)
