"""Regularized solutions and the scalar functionals evaluated from spectral data.

All functionals accept scalar or array ``sigmaL`` (``sigmaL = 1/alpha``) and
cost O(n) per value; nothing is refactorized.  The truncation count ``r``
keeps the ``r`` largest band values active and filters out the rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, DivisionDegenerate, SingularSystem
from .linalg import check_truncation

__all__ = [
    "ProblemInstance",
    "RegularizedSolution",
    "solve_spectral",
    "solve_direct",
    "residual_functional",
    "trace_functional",
    "chi2_functional",
    "seminorm",
]


@dataclass
class ProblemInstance:
    """Weighted linear inverse problem ``Wd (G m - d_obs)`` with regularizer ``L``.

    ``Wd`` may be given as a vector (diagonal weighting) or a full matrix.
    """

    G: np.ndarray
    d_obs: np.ndarray
    Wd: np.ndarray
    L: np.ndarray
    m0: np.ndarray | None = None
    m_exact: np.ndarray | None = None
    d_clean: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        self.L = np.atleast_2d(np.asarray(self.L, dtype=float))
        self.d_obs = np.asarray(self.d_obs, dtype=float).ravel()
        self.Wd = np.asarray(self.Wd, dtype=float)
        m, n = self.G.shape
        if self.m0 is None:
            self.m0 = np.zeros(n)
        self.m0 = np.asarray(self.m0, dtype=float).ravel()
        if self.d_obs.size != m or self.m0.size != n or self.L.shape[1] != n:
            raise DimensionMismatch("inconsistent problem dimensions")
        if self.Wd.ndim == 0:
            self.Wd = np.full(m, float(self.Wd))
        if self.Wd.shape not in ((m,), (m, m)):
            raise DimensionMismatch(f"Wd has shape {self.Wd.shape}, expected ({m},) or ({m}, {m})")

    @property
    def shape(self):
        return self.G.shape

    def weight(self, v):
        """Apply ``Wd`` to a vector or to the rows of a matrix."""
        if self.Wd.ndim == 1:
            return self.Wd[:, None] * v if np.ndim(v) == 2 else self.Wd * v
        return self.Wd @ v

    @property
    def Gt(self):
        return self.weight(self.G)

    def rt(self, m_ref=None):
        """Weighted residual ``Wd (d_obs - G m_ref)`` (default ``m_ref = m0``)."""
        m_ref = self.m0 if m_ref is None else m_ref
        return self.weight(self.d_obs - self.G @ m_ref)

    def with_data(self, d_obs):
        return ProblemInstance(self.G, d_obs, self.Wd, self.L, self.m0,
                               self.m_exact, self.d_clean, dict(self.meta))


@dataclass(frozen=True)
class RegularizedSolution:
    y: np.ndarray
    m: np.ndarray
    alpha: float
    sigmaL: float
    r: int | None = None


def _positive(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError(f"{name} must be positive")
    return x


def _active(f, s, r):
    r = check_truncation(f, r)
    nb = f.n_band
    return r, f.gamma_band[nb - r:], s.band[nb - r:]


def solve_spectral(f, s, alpha, r=None, m0=None):
    """Regularized shifted solution from a GSVD or SVD and projected data.

    ``y = sum_active nu_i s_i / (nu_i^2 + alpha^2 mu_i^2) z_i + sum_inf s_i z_i``;
    this is ``f_i s_i / nu_i`` without dividing by ``nu``.
    """
    alpha = float(_positive(alpha, "alpha"))
    r = check_truncation(f, r)
    nb = f.n_band
    nu = f.nu_band[nb - r:]
    mu = f.mu_band[nb - r:]
    den = nu ** 2 + alpha ** 2 * mu ** 2
    if np.any(den == 0):
        raise DivisionDegenerate("nu = mu = 0 on the active band; factors are corrupted")
    coef = nu * s.band[nb - r:] / den
    y = f.band_basis[:, nb - r:] @ coef
    if f.n_inf:
        y = y + f.inf_basis @ s.inf
    m0 = np.zeros_like(y) if m0 is None else np.asarray(m0, dtype=float)
    return RegularizedSolution(y=y, m=m0 + y, alpha=alpha, sigmaL=1.0 / alpha, r=r)


def solve_direct(problem, alpha, m_ref=None):
    """Dense normal-equations solve of the weighted Tikhonov problem (oracle path)."""
    alpha = float(_positive(alpha, "alpha"))
    Gt = problem.Gt
    rt = problem.rt(m_ref)
    A = Gt.T @ Gt + alpha ** 2 * (problem.L.T @ problem.L)
    try:
        y = sla.solve(A, Gt.T @ rt, assume_a="pos")
    except (np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
        raise SingularSystem(str(exc)) from exc
    base = problem.m0 if m_ref is None else m_ref
    return RegularizedSolution(y=y, m=base + y, alpha=alpha, sigmaL=1.0 / alpha)


def _ratio(gamma, sigmaL):
    # shape (..., k): 1 / (gamma^2 sigma^2 + 1)
    sig = np.asarray(sigmaL, dtype=float)[..., None]
    return 1.0 / (gamma ** 2 * sig ** 2 + 1.0)


def residual_functional(f, s, sigmaL, r=None):
    """``N(sigma) = ||Gt y - rt||^2`` from the spectral data."""
    sigmaL = _positive(sigmaL, "sigmaL")
    r, g, sa = _active(f, s, r)
    const = float(np.sum(s.band[:f.n_band - r] ** 2) + np.sum(s.tail ** 2))
    return np.sum((sa * _ratio(g, sigmaL)) ** 2, axis=-1) + const


def trace_functional(f, sigmaL, r=None):
    """``T(sigma) = trace(I - influence matrix)``."""
    sigmaL = _positive(sigmaL, "sigmaL")
    r = check_truncation(f, r)
    g = f.gamma_band[f.n_band - r:]
    return (f.m - f.n_inf - r) + np.sum(_ratio(g, sigmaL), axis=-1)


def chi2_functional(f, s, sigmaL, r=None):
    """Value and ``d/dsigma`` of ``||k(sigma)||^2`` over the active band.

    With truncation the constant filtered terms are dropped, so the value
    is the filtered functional.
    """
    sigmaL = _positive(sigmaL, "sigmaL")
    r, g, sa = _active(f, s, r)
    w = _ratio(g, sigmaL)
    value = np.sum(sa ** 2 * w, axis=-1)
    deriv = -2.0 * sigmaL * np.sum(g ** 2 * sa ** 2 * w ** 2, axis=-1)
    return value, deriv


def seminorm(f, s, sigmaL, r=None):
    """``||L y(sigma)||^2 = sigma^4 sum gamma^2 s^2 / (gamma^2 sigma^2 + 1)^2``."""
    sigmaL = _positive(sigmaL, "sigmaL")
    r, g, sa = _active(f, s, r)
    w = _ratio(g, sigmaL)
    return sigmaL ** 4 * np.sum(g ** 2 * sa ** 2 * w ** 2, axis=-1)
