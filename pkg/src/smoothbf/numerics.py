"""Equispaced grids, grid-valued functions and trapezoidal quadrature.

Every integral in the package goes through :func:`integrate` or
:func:`integrate_out`, so identities that hold under one trapezoid rule
keep holding after they are chained together.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DomainError

DEFAULT_GRID_SIZE = 101


@dataclass(frozen=True)
class Grid1D:
    """``m`` equispaced points covering ``[lo, hi]`` including both ends."""

    lo: float
    hi: float
    m: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.lo >= self.hi:
            raise ConfigError(f"grid needs lo < hi, got [{self.lo}, {self.hi}]")
        if int(self.m) != self.m or self.m < 2:
            raise ConfigError(f"grid needs at least 2 points, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def points(self):
        x = np.linspace(self.lo, self.hi, self.m)
        x[-1] = self.hi
        return x

    @property
    def spacing(self):
        return (self.hi - self.lo) / (self.m - 1)

    @property
    def weights(self):
        """Trapezoid weights, so that ``weights @ f`` integrates ``f``."""
        w = np.full(self.m, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    @property
    def length(self):
        return self.hi - self.lo

    def interior_mask(self, h):
        """Points ``u`` with ``[u - h, u + h]`` inside the interval."""
        x = self.points
        tol = 1e-12 * self.length
        return (x - h >= self.lo - tol) & (x + h <= self.hi + tol)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        tol = 1e-12 * self.length
        return (x >= self.lo - tol) & (x <= self.hi + tol)


@dataclass(frozen=True)
class GridFn:
    grid: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.m,):
            raise DataError(f"expected {self.grid.m} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("grid function has non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        return eval_at(self, x)

    def with_values(self, values):
        return GridFn(self.grid, values)

    def __add__(self, other):
        if isinstance(other, GridFn):
            _check_same(self.grid, other.grid)
            return GridFn(self.grid, self.values + other.values)
        return GridFn(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFn):
            _check_same(self.grid, other.grid)
            return GridFn(self.grid, self.values - other.values)
        return GridFn(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, GridFn):
            _check_same(self.grid, other.grid)
            return GridFn(self.grid, self.values * other.values)
        return GridFn(self.grid, self.values * other)

    __rmul__ = __mul__


@dataclass(frozen=True)
class GridFn2:
    """Table of values indexed by (point of ``grid_a``, point of ``grid_b``)."""

    grid_a: Grid1D
    grid_b: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid_a.m, self.grid_b.m):
            raise DataError(
                f"expected shape {(self.grid_a.m, self.grid_b.m)}, got {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise DataError("grid table has non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def _check_same(g1, g2):
    if g1 != g2:
        raise DataError(f"grid mismatch: {g1} vs {g2}")


def integrate(f):
    """Trapezoidal integral of a :class:`GridFn` over its whole grid."""
    return float(f.grid.weights @ f.values)


def integrate_out(F, axis="b", weight=None):
    """Integrate a table over one axis, leaving a function of the other.

    Parameters
    ----------
    F : GridFn2
    axis : {"a", "b"}
        Axis to integrate out.
    weight : GridFn, optional
        Multiplies ``F`` along the integrated axis before integration.
        Must live on that axis' grid.
    """
    if axis == "b":
        g_int, g_keep, table = F.grid_b, F.grid_a, F.values
    elif axis == "a":
        g_int, g_keep, table = F.grid_a, F.grid_b, F.values.T
    else:
        raise ConfigError(f"axis must be 'a' or 'b', got {axis!r}")
    w = g_int.weights
    if weight is not None:
        _check_same(weight.grid, g_int)
        w = w * weight.values
    return GridFn(g_keep, table @ w)


def eval_at(f, x):
    """Piecewise-linear interpolation of ``f`` at ``x`` (scalar or array)."""
    g = f.grid
    xa = np.asarray(x, dtype=float)
    if not np.all(g.contains(xa)):
        bad = xa[~g.contains(xa)] if xa.ndim else xa
        raise DomainError(f"points outside [{g.lo}, {g.hi}]: {np.ravel(bad)[:5]}")
    xc = np.clip(xa, g.lo, g.hi)
    pos = (xc - g.lo) / g.spacing
    # grid points return their stored value exactly
    near = np.rint(pos)
    pos = np.where(np.abs(pos - near) < 1e-9, near, pos)
    i = np.clip(np.floor(pos).astype(int), 0, g.m - 2)
    frac = pos - i
    v = f.values
    out = v[i] * (1.0 - frac) + v[i + 1] * frac
    return float(out) if out.ndim == 0 else out


def second_difference(f):
    """Central second differences; endpoints copy their neighbours."""
    g = f.grid
    if g.m < 3:
        raise ConfigError("second differences need at least 3 grid points")
    v = f.values
    d2 = np.empty_like(v)
    d2[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / g.spacing**2
    d2[0] = d2[1]
    d2[-1] = d2[-2]
    return GridFn(g, d2)


def first_difference(f):
    """Central first differences with one-sided second-order endpoints."""
    g = f.grid
    if g.m < 3:
        raise ConfigError("first differences need at least 3 grid points")
    return GridFn(g, np.gradient(f.values, g.spacing, edge_order=2))


def tabulate(fn, grid):
    """Evaluate a vectorised callable on ``grid``."""
    return GridFn(grid, np.broadcast_to(fn(grid.points), (grid.m,)))
