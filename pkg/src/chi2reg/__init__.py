"""Regularization-parameter estimation for underdetermined Tikhonov problems.

The chi-squared principle (Newton root finding on the minimum of the
regularized functional) is provided alongside UPRE, GCV, the discrepancy
principle and the L-curve, all evaluated from one GSVD or SVD.  Test
problems, a minimum-support focusing inversion and an experiment harness
are included.
"""

from .errors import *  # noqa: F401,F403
from .linalg import GsvdFactors, SvdFactors, compute_gsvd, compute_svd, spectral_coefficients
from .msfocus import MsConfig, ms_invert
from .regparam import Chi2Config, SelectionResult, alpha_grid, select
from .tikhonov import ProblemInstance, solve_direct, solve_spectral

__version__ = "0.1.0"

__all__ = [
    "GsvdFactors",
    "SvdFactors",
    "compute_gsvd",
    "compute_svd",
    "spectral_coefficients",
    "MsConfig",
    "ms_invert",
    "Chi2Config",
    "SelectionResult",
    "alpha_grid",
    "select",
    "ProblemInstance",
    "solve_direct",
    "solve_spectral",
]
