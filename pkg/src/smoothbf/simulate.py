"""Monte Carlo study of the additive estimators on Model M1.

Model M1 has three components ``x^2``, ``x^3`` and ``-x^4`` on a design
drawn from an equicorrelated trivariate normal with mean 0.5 and variance
0.5 per coordinate, truncated to the unit cube by rejection.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .backfit import (NORMINGS, SAMPLE_MEAN, ComponentTruth, fit, fit_nw_baseline,
                      norming_shift)
from .density import estimate_marginals
from .errors import ConfigError, NumericalError
from .kernels import CONVENTIONAL, KERNEL_MODES, Biweight, BoundaryKernel
from .marginal import local_linear_marginal
from .numerics import Grid1D, GridFn, integrate

log = logging.getLogger(__name__)

D = 3
UNIT = (0.0, 1.0)
DESIGN_MEAN = 0.5
DESIGN_VAR = 0.5
MIN_ACCEPTANCE = 1e-4
MAX_FAILURE_RATE = 0.02
ORACLE_KEY = 0x0AC1E

M1_COMPONENTS = (
    lambda x: x**2,
    lambda x: x**3,
    lambda x: -(x**4),
)
M1_SECOND_DERIVATIVES = (
    lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
    lambda x: 6.0 * np.asarray(x, dtype=float),
    lambda x: -12.0 * np.asarray(x, dtype=float) ** 2,
)


def _correlation(rho, dim=D):
    C = (1.0 - rho) * np.eye(dim) + rho * np.ones((dim, dim))
    if np.linalg.eigvalsh(C).min() <= 0.0:
        raise ConfigError(f"correlation {rho} does not give a positive definite matrix")
    return C


def sample_design(rho, n, seed=None, var=DESIGN_VAR, batch=None):
    """Draw ``n`` points of the truncated equicorrelated normal on [0, 1]^3.

    Draws from N(0.5, var * C) where C has unit diagonal and off-diagonal
    ``rho``, and discards any draw with a coordinate outside [0, 1].
    """
    if n < 1:
        raise ConfigError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(var * _correlation(rho))
    batch = batch or max(4 * n, 1000)
    out, have, drawn = [], 0, 0
    while have < n:
        z = rng.standard_normal((batch, D)) @ chol.T + DESIGN_MEAN
        keep = z[np.all((z >= 0.0) & (z <= 1.0), axis=1)]
        out.append(keep)
        have += len(keep)
        drawn += batch
        if have < n and drawn >= 1e6 and have < MIN_ACCEPTANCE * drawn:
            raise ConfigError("acceptance probability of the truncated design is below 1e-4")
    return np.concatenate(out)[:n]


def gen_M1(design, noise_sd, seed=None):
    """Responses ``X1^2 + X2^3 - X3^4 + eps`` with ``eps ~ N(0, noise_sd^2)``."""
    rng = np.random.default_rng(seed)
    X = np.asarray(design, dtype=float)
    signal = sum(f(X[:, j]) for j, f in enumerate(M1_COMPONENTS))
    if noise_sd == 0:
        return signal
    return signal + noise_sd * rng.standard_normal(X.shape[0])


def oracle_bandwidth(j, n, noise_var, design_sample, kernel=None,
                     second_derivatives=M1_SECOND_DERIVATIVES):
    """Asymptotically optimal local linear bandwidth for component ``j``::

        h = n^-1/5 [s^2 int K^2]^1/5 [C_K^2 int m''^2 p]^-1/5

    with ``int m''^2 p`` estimated by the average of ``m''(X_j)^2`` over
    ``design_sample``.
    """
    kernel = kernel or Biweight()
    curv = float(np.mean(second_derivatives[j](design_sample[:, j]) ** 2))
    if not curv > 0.0:
        raise ConfigError(f"component {j} has no curvature; the bandwidth rule is undefined")
    return (n ** -0.2 * (noise_var * kernel.roughness) ** 0.2
            * (kernel.second_moment**2 * curv) ** -0.2)


def design_marginal_density(rho, j=0, var=DESIGN_VAR):
    """Marginal density of coordinate ``j`` of the truncated design.

    Returns a vectorised callable on [0, 1].
    """
    sd = np.sqrt(var)
    phi = stats.norm(DESIGN_MEAN, sd)
    if rho == 0.0:
        mass = phi.cdf(1.0) - phi.cdf(0.0)
        return lambda x: np.where((np.asarray(x) >= 0) & (np.asarray(x) <= 1),
                                  phi.pdf(x) / mass, 0.0)
    # Given X_j = x the other two are bivariate normal.
    cov = var * np.array([[1 - rho**2, rho - rho**2], [rho - rho**2, 1 - rho**2]])
    u = np.linspace(0.0, 1.0, 2001)
    inner = np.array([
        stats.multivariate_normal(DESIGN_MEAN + rho * (x - DESIGN_MEAN) * np.ones(2), cov)
        .cdf(np.ones(2), lower_limit=np.zeros(2))
        for x in u
    ])
    dens = phi.pdf(u) * inner
    g = Grid1D(0.0, 1.0, u.size)
    dens = dens / (g.weights @ dens)
    fn = GridFn(g, dens)
    return lambda x: fn(x)


def M1_truth(rho, j, var=DESIGN_VAR, h=1e-3):
    """Component truth with design density derivatives for bias diagnostics."""
    p = design_marginal_density(rho, j, var)

    def p_d(x):
        x = np.asarray(x, dtype=float)
        lo, hi = np.clip(x - h, 0, 1), np.clip(x + h, 0, 1)
        return (p(hi) - p(lo)) / (hi - lo)

    def p_dd(x):
        x = np.clip(np.asarray(x, dtype=float), h, 1 - h)
        return (p(x + h) - 2 * p(x) + p(x - h)) / h**2

    return ComponentTruth(M1_COMPONENTS[j], M1_SECOND_DERIVATIVES[j], p, p_d, p_dd)


@dataclass(frozen=True)
class SimConfig:
    n: int = 400
    reps: int = 500
    rho: float = 0.0
    noise_sd: float = 0.1
    kernel_mode: str = CONVENTIONAL
    norming: str = SAMPLE_MEAN
    grid_size: int = 101
    seed: int = 2006
    bandwidths: tuple = None
    estimator: str = "new"
    oracle: bool = False
    oracle_draws: int = 1_000_000
    design_var: float = DESIGN_VAR

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.n < 10:
            raise ConfigError("n must be at least 10")
        if not self.noise_sd > 0:
            raise ConfigError("noise_sd must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError("rho must lie in [0, 1)")
        if self.kernel_mode not in KERNEL_MODES:
            raise ConfigError(f"kernel mode must be one of {KERNEL_MODES}")
        if self.norming not in NORMINGS:
            raise ConfigError(f"norming must be one of {NORMINGS}")
        if self.estimator not in ("new", "nw"):
            raise ConfigError("estimator must be 'new' or 'nw'")
        if self.bandwidths is not None:
            object.__setattr__(self, "bandwidths", tuple(float(h) for h in self.bandwidths))
            if len(self.bandwidths) != D:
                raise ConfigError(f"need {D} bandwidths")


@dataclass(frozen=True)
class Metrics:
    isb: float
    ivar: float
    imse: float


@dataclass(frozen=True)
class ComponentCurves:
    bias: GridFn
    variance: GridFn
    mse: GridFn
    metrics: Metrics


@dataclass(frozen=True)
class MCReport:
    config: SimConfig
    bandwidths: tuple
    centering: tuple
    targets: tuple
    components: tuple
    oracle: tuple = None
    failures: int = 0
    sweeps: tuple = field(default=(), repr=False)


def integrated_metrics(bias, variance, mse=None, mask=None):
    """Unweighted trapezoid integrals of squared bias, variance and MSE.

    ``mask`` restricts the integrals to a contiguous block of grid points.
    """
    g = bias.grid
    b2, v = bias.values**2, variance.values
    m = b2 + v if mse is None else mse.values
    if mask is not None:
        idx = np.flatnonzero(mask)
        if idx.size < 2 or np.any(np.diff(idx) != 1):
            raise ConfigError("integration mask must select a contiguous block of >= 2 points")
        pts = g.points[idx]
        g = Grid1D(float(pts[0]), float(pts[-1]), idx.size)
        b2, v, m = b2[idx], v[idx], m[idx]
    return Metrics(
        float(integrate(GridFn(g, b2))),
        float(integrate(GridFn(g, v))),
        float(integrate(GridFn(g, m))),
    )


def design_oracle(config):
    """Large design sample for centring constants and the bandwidth rule."""
    return sample_design(config.rho, config.oracle_draws,
                         seed=[config.seed, ORACLE_KEY], var=config.design_var)


def scenario_constants(config):
    """``(bandwidths, E m_j(X_j))`` for a configuration."""
    big = design_oracle(config)
    centering = tuple(float(np.mean(f(big[:, j]))) for j, f in enumerate(M1_COMPONENTS))
    if config.bandwidths is not None:
        h = config.bandwidths
    else:
        h = tuple(oracle_bandwidth(j, config.n, config.noise_sd**2, big) for j in range(D))
    return h, centering


def _oracle_curve(X, y, j, h, config, grid):
    """Univariate local linear fit of ``Y - sum_{k != j} m_k(X_k)`` on ``X_j``."""
    partial = y - sum(f(X[:, k]) for k, f in enumerate(M1_COMPONENTS) if k != j)
    bk = BoundaryKernel(Biweight(), h, *UNIT, "K", config.kernel_mode)
    marg = estimate_marginals(X[:, j], bk, grid)
    curve, _ = local_linear_marginal(X[:, j], partial, bk, marg)
    shift = norming_shift(curve, config.norming, p_tilde=marg.p_tilde,
                          p_hat=marg.p_hat, x_col=X[:, j])
    return curve.values - shift


def run_replication(config, rep, bandwidths):
    """One replication: ``(rep, components (d, m), oracle (d, m) or None, sweeps)``.

    Numerical failures are returned as ``(rep, None, None, message)``.
    """
    rng = np.random.default_rng([config.seed, rep])
    X = sample_design(config.rho, config.n, rng, var=config.design_var)
    y = gen_M1(X, config.noise_sd, rng)
    estimator = fit if config.estimator == "new" else fit_nw_baseline
    try:
        result = estimator(X, y, bandwidths, intervals=[UNIT] * D,
                           kernel_mode=config.kernel_mode, norming=config.norming,
                           grid_size=config.grid_size)
        comps = np.stack([c.values for c in result.components])
        oracle = None
        if config.oracle:
            grid = Grid1D(*UNIT, config.grid_size)
            oracle = np.stack([_oracle_curve(X, y, j, bandwidths[j], config, grid)
                               for j in range(D)])
    except NumericalError as exc:
        return rep, None, None, str(exc)
    return rep, comps, oracle, result.sweeps


def _replication_task(args):
    return run_replication(*args)


def _curves(estimates, targets, grid):
    reps = estimates.shape[0]
    mean = estimates.mean(axis=0)
    var = estimates.var(axis=0, ddof=1) if reps > 1 else np.zeros_like(mean)
    out = []
    for j in range(estimates.shape[1]):
        bias = GridFn(grid, mean[j] - targets[j])
        variance = GridFn(grid, var[j])
        mse = GridFn(grid, bias.values**2 + variance.values)
        out.append(ComponentCurves(bias, variance, mse, integrated_metrics(bias, variance, mse)))
    return tuple(out)


def run_mc(config, workers=1, constants=None):
    """Run the Monte Carlo study described by ``config``.

    Replication ``r`` draws from the generator seeded by ``(seed, r)``,
    and results are reduced in replication order, so the report does not
    depend on ``workers``.

    Raises
    ------
    NumericalError
        If more than 2% of the replications fail.
    """
    h, centering = constants or scenario_constants(config)
    grid = Grid1D(*UNIT, config.grid_size)
    tasks = [(config, r, h) for r in range(config.reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replication_task, tasks,
                                    chunksize=max(1, config.reps // (4 * workers))))
    else:
        results = [_replication_task(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    ok = [r for r in results if r[1] is not None]
    failures = len(results) - len(ok)
    if failures:
        log.warning("%d of %d replications failed: %s", failures, len(results),
                    next(r[3] for r in results if r[1] is None))
    if failures > MAX_FAILURE_RATE * config.reps:
        raise NumericalError(
            f"{failures} of {config.reps} replications failed (limit 2%)"
        )
    targets = np.stack([f(grid.points) - c for f, c in zip(M1_COMPONENTS, centering)])
    estimates = np.stack([r[1] for r in ok])
    components = _curves(estimates, targets, grid)
    oracle = None
    if config.oracle:
        oracle = _curves(np.stack([r[2] for r in ok]), targets, grid)
    return MCReport(
        config=config,
        bandwidths=tuple(h),
        centering=centering,
        targets=tuple(GridFn(grid, t) for t in targets),
        components=components,
        oracle=oracle,
        failures=failures,
        sweeps=tuple(r[3] for r in ok),
    )


def config_dict(config):
    return asdict(config)
