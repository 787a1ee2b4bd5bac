"""Base kernels, the compensating kernel and boundary-corrected kernels.

Two kinds of boundary-corrected kernels are needed. The *K-type* kernel
``K_h(u, v)`` is normalised over its second (data) argument::

    int_I K_h(u, v) dv = 1,    int_I (v - u) K_h(u, v) dv = 0

for every ``u`` in ``I``. The *L-type* kernel ``L_h(u, v)`` is normalised
over its first (grid) argument::

    int_I L_h(u, v) du = 1,    int_I (v - u) L_h(u, v) du = 0

for every ``v`` in ``I``. Both are a linear-in-``t`` correction factor times
the scaled convolution kernel ``h^-1 k(t)`` with ``t = (v - u) / h``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate as spi

from .errors import ConfigError, DomainError, SingularCorrectionError

SQRT2 = np.sqrt(2.0)
CORRECTED = "corrected"
CONVENTIONAL = "conventional"
KERNEL_MODES = (CORRECTED, CONVENTIONAL)
SINGULAR_TOL = 1e-12


class Kernel:
    """A symmetric convolution kernel with compact support ``[-s, s]``.

    Subclasses provide ``__call__`` and may override :meth:`moment` with
    something better than adaptive quadrature.
    """

    support = 1.0
    name = "kernel"

    def __call__(self, u):
        raise NotImplementedError

    def moment(self, ell, a, b):
        """``int_a^b t**ell k(t) dt``, vectorised over ``a`` and ``b``."""
        return quad_moment(self, ell, a, b)

    @cached_property
    def second_moment(self):
        """``C_K = int t^2 k(t) dt``."""
        return float(self.moment(2, -self.support, self.support))

    @cached_property
    def roughness(self):
        """``int k(t)^2 dt``."""
        s = self.support
        val, _ = spi.quad(lambda t: float(self(t)) ** 2, -s, s,
                          epsabs=1e-14, epsrel=1e-13, limit=200)
        return val


def quad_moment(kernel, ell, a, b):
    """Incomplete moment by adaptive quadrature. Used as a generic fallback
    and as the independent check on closed forms."""
    s = kernel.support

    def one(lo, hi):
        lo, hi = max(lo, -s), min(hi, s)
        if hi <= lo:
            return 0.0
        # Breakpoints where piecewise kernels (L) change formula.
        pts = [p for p in (-s / SQRT2, 0.0, s / SQRT2) if lo < p < hi]
        val, _ = spi.quad(lambda t: t**ell * float(kernel(t)), lo, hi,
                          points=pts or None, epsabs=1e-14, epsrel=1e-13,
                          limit=200)
        return val

    return np.vectorize(one, otypes=[float])(a, b)[()]


class Biweight(Kernel):
    """``k(u) = 15/16 (1 - u^2)^2`` on ``[-1, 1]``."""

    name = "biweight"
    support = 1.0

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        w = 1.0 - u * u
        return np.where(np.abs(u) <= 1.0, 0.9375 * w * w, 0.0)[()]

    @staticmethod
    def _antideriv(ell, t):
        return 0.9375 * (t ** (ell + 1) / (ell + 1)
                         - 2.0 * t ** (ell + 3) / (ell + 3)
                         + t ** (ell + 5) / (ell + 5))

    def moment(self, ell, a, b):
        if ell < 0 or int(ell) != ell:
            raise ConfigError(f"moment order must be a nonnegative integer, got {ell}")
        a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
        b = np.clip(np.asarray(b, dtype=float), -1.0, 1.0)
        b = np.maximum(a, b)
        return (self._antideriv(ell, b) - self._antideriv(ell, a))[()]

    second_moment = 1.0 / 7.0
    roughness = 5.0 / 7.0


def biweight():
    return Biweight()


class CompensatingKernel(Kernel):
    """``L(u) = 2 k_{1/sqrt2}(u) - k_{sqrt2}(u)`` with ``k_b(u) = k(u/b)/b``.

    Has unit mass, zero first moment and second moment ``-C_K``. Not a
    density: it is negative in its tails.
    """

    def __init__(self, base):
        self.base = base
        self.support = SQRT2 * base.support
        self.name = f"L[{base.name}]"

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        k = self.base
        return (2.0 * SQRT2 * k(SQRT2 * u) - k(u / SQRT2) / SQRT2)[()]

    def moment(self, ell, a, b):
        # int_a^b t^l k_c(t) dt = c^l int_{a/c}^{b/c} s^l k(s) ds
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        c1, c2 = 1.0 / SQRT2, SQRT2
        m1 = c1**ell * self.base.moment(ell, a / c1, b / c1)
        m2 = c2**ell * self.base.moment(ell, a / c2, b / c2)
        return np.asarray(2.0 * m1 - m2)[()]

    @cached_property
    def second_moment(self):
        return -self.base.second_moment


def make_L(base):
    return CompensatingKernel(base)


@dataclass(frozen=True)
class BoundaryKernel:
    """Kernel ``k`` at bandwidth ``h`` on the interval ``[lo, hi]``.

    ``side="K"`` gives the K-type correction (coefficients depend on the
    first argument, normalised over the second); ``side="L"`` the L-type
    one. ``mode="conventional"`` switches the correction off, leaving the
    plain ``h^-1 k((v - u)/h)``.
    """

    kernel: Kernel
    h: float
    lo: float
    hi: float
    side: str = "K"
    mode: str = CORRECTED
    grid: object = None

    def __post_init__(self):
        if self.side not in ("K", "L"):
            raise ConfigError(f"side must be 'K' or 'L', got {self.side!r}")
        if self.mode not in KERNEL_MODES:
            raise ConfigError(f"kernel mode must be one of {KERNEL_MODES}, got {self.mode!r}")
        if not self.lo < self.hi:
            raise ConfigError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")
        if not (np.isfinite(self.h) and 0.0 < self.h < 0.5 * (self.hi - self.lo)):
            raise ConfigError(
                f"bandwidth must lie in (0, {0.5 * (self.hi - self.lo):g}), got {self.h}"
            )
        if self.grid is not None:
            if self.side != "L":
                raise ConfigError("only L-type kernels integrate over the grid")
            if (self.grid.lo, self.grid.hi) != (self.lo, self.hi):
                raise ConfigError("quadrature grid must span the kernel interval")

    def on_grid(self, grid):
        """Copy whose moments use the trapezoid rule on ``grid``.

        The L-type conditions then hold exactly under that rule, which
        is what makes pair tables marginalise exactly on the grid.
        """
        return BoundaryKernel(self.kernel, self.h, self.lo, self.hi,
                              self.side, self.mode, grid)

    def _check_inside(self, x):
        tol = 1e-12 * (self.hi - self.lo)
        if np.any((x < self.lo - tol) | (x > self.hi + tol)):
            raise DomainError(f"point(s) outside [{self.lo}, {self.hi}]")

    def window(self, x):
        """Standardised integration range of the moment at ``x``.

        K-type: ``{t : x + h t in I}``; L-type: ``{t : x - h t in I}``.
        """
        x = np.asarray(x, dtype=float)
        self._check_inside(x)
        h = self.h
        if self.side == "K":
            return (self.lo - x) / h, (self.hi - x) / h
        return (x - self.hi) / h, (x - self.lo) / h

    def mu(self, x, ell):
        a, b = self.window(x)
        if self.grid is None:
            return self.kernel.moment(ell, a, b)
        x = np.asarray(x, dtype=float)
        t = (x[..., None] - self.grid.points) / self.h
        return (t**ell * self.kernel(t) / self.h) @ self.grid.weights

    def correction(self, x):
        """Coefficients ``(alpha, beta)`` with factor ``alpha - beta t``.

        ``alpha = mu2 / D`` and ``beta = mu1 / D`` with
        ``D = mu0 mu2 - mu1^2``, where ``x`` is the argument the moments
        depend on (``u`` for K-type, ``v`` for L-type).
        """
        x = np.asarray(x, dtype=float)
        if self.mode == CONVENTIONAL:
            self._check_inside(x)
            return np.ones_like(x), np.zeros_like(x)
        m0, m1, m2 = (self.mu(x, ell) for ell in (0, 1, 2))
        det = m0 * m2 - m1 * m1
        if np.any(np.abs(det) < SINGULAR_TOL):
            raise SingularCorrectionError(
                f"boundary correction is singular (|det| < {SINGULAR_TOL:g})"
            )
        return np.asarray(m2 / det), np.asarray(m1 / det)

    def __call__(self, u, v):
        """Kernel weights for every pair, shape ``u.shape + v.shape``.

        ``u`` is the grid argument and ``v`` the data argument in both
        sides' conventions.
        """
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        t = (v[None, ...] - u.reshape(u.shape + (1,) * v.ndim)) / self.h
        t = t.reshape(u.shape + v.shape)
        base = self.kernel(t) / self.h
        if self.side == "K":
            alpha, beta = self.correction(u)
            alpha = alpha.reshape(u.shape + (1,) * v.ndim)
            beta = beta.reshape(u.shape + (1,) * v.ndim)
        else:
            self._check_inside(u)
            alpha, beta = self.correction(v)
        return np.asarray((alpha - beta * t) * base)[()]


def mu_K(bk, u, ell):
    """Incomplete moment ``int_{t: u + h t in I} t^ell k(t) dt``."""
    if bk.side != "K":
        raise ConfigError("mu_K needs a K-type kernel")
    return bk.mu(u, ell)


def mu_L_star(bl, v, ell):
    """Incomplete moment ``int_{t: v - h t in I} t^ell L(t) dt``."""
    if bl.side != "L":
        raise ConfigError("mu_L_star needs an L-type kernel")
    return bl.mu(v, ell)


def eval_Kh(bk, u, v):
    if bk.side != "K":
        raise ConfigError("eval_Kh needs a K-type kernel")
    return bk(u, v)


def eval_Lh(bl, u, v):
    if bl.side != "L":
        raise ConfigError("eval_Lh needs an L-type kernel")
    return bl(u, v)


def eval_conventional(kernel, h, u, v):
    """``h^-1 k((v - u)/h)`` with no boundary correction."""
    if not h > 0:
        raise ConfigError(f"bandwidth must be positive, got {h}")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return (kernel((v - u) / h) / h)[()] if np.ndim(v - u) else float(kernel((v - u) / h) / h)


def C_K_ell(bk, x, ell):
    """Bias constant ``(mu2 mu_l - mu1 mu_{l+1}) / (mu0 mu2 - mu1^2)``.

    Equals ``int t^ell K_h(x, x + h t) h dt`` for the corrected kernel and
    gives the local linear bias factor of the conventional kernel at ``ell=2``.
    """
    m0, m1, m2 = (bk.mu(x, i) for i in (0, 1, 2))
    det = m0 * m2 - m1 * m1
    if np.any(np.abs(det) < SINGULAR_TOL):
        raise SingularCorrectionError("moment determinant vanished")
    num = m2 * bk.mu(x, ell) - m1 * bk.mu(x, ell + 1)
    return np.asarray(num / det)[()]
