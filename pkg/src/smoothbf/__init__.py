"""Local linear smooth backfitting for additive regression models."""

from .backfit import (NORMINGS, PHAT, PTILDE, SAMPLE_MEAN, AdditiveFit, apply_norming,
                      bias_diagnostics, fit, fit_nw_baseline, predict, solve_direct)
from .errors import (ConfigError, DataError, DomainError, NonConvergence, NumericalError,
                     SmoothBFError)
from .kernels import CONVENTIONAL, CORRECTED, Biweight, BoundaryKernel, CompensatingKernel
from .numerics import Grid1D, GridFn, GridFn2

__all__ = [
    "AdditiveFit", "Biweight", "BoundaryKernel", "CONVENTIONAL", "CORRECTED",
    "CompensatingKernel", "ConfigError", "DataError", "DomainError", "Grid1D", "GridFn",
    "GridFn2", "NORMINGS", "NonConvergence", "NumericalError", "PHAT", "PTILDE",
    "SAMPLE_MEAN", "SmoothBFError", "apply_norming", "bias_diagnostics", "fit",
    "fit_nw_baseline", "predict", "solve_direct",
]

__version__ = "0.1.0"
