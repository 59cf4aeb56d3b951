"""Regularization-parameter selectors operating on spectral data.

Grid-based selectors (UPRE, GCV, MDP, L-curve) sort the grid first, so the
result never depends on the order in which values are supplied, and break
ties toward the larger ``alpha``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import DegenerateTraceWarning, NonConvergenceWarning
from .linalg import check_truncation
from .tikhonov import chi2_functional, residual_functional, seminorm, trace_functional

__all__ = [
    "SelectionResult",
    "Chi2Config",
    "chi2_tolerance",
    "significant_count",
    "select_chi2",
    "select_upre",
    "select_gcv",
    "select_mdp",
    "select_lcurve",
    "alpha_grid",
    "select",
    "METHODS",
]

METHODS = ("chi2", "upre", "gcv", "mdp", "lcurve")
STATUSES = ("ok", "no-root-clamped-max-reg", "no-root-clamped-min-reg", "flat-objective", "no-corner")


@dataclass
class SelectionResult:
    alpha: float
    method: str
    iterations: int = 0
    converged: bool = True
    status: str = "ok"
    objective_trace: list = field(default_factory=list)
    dof: float | None = None
    tol: float | None = None

    @property
    def sigmaL(self):
        return 1.0 / self.alpha


@dataclass
class Chi2Config:
    """Settings for the chi-squared Newton root finder.

    ``tol_rule`` picks the normal quantile used for the acceptance interval
    ``|F| <= z * sqrt(2 dof)``: ``"central"`` (default) takes the two-sided
    ``(1 + theta)/2`` quantile (``z = 1.96`` at ``theta = 0.95``),
    ``"upper-tail"`` takes ``z`` with upper-tail probability ``theta/2``
    (``z = 0.0627``, a much tighter interval).
    """

    theta: float = 0.95
    max_newton_iters: int = 50
    dof_override: float | None = None
    rank_threshold: float = float(np.sqrt(np.finfo(float).eps))
    truncation: int | None = None
    tol_rule: str = "central"
    tol_override: float | None = None
    sigma_bounds: tuple = (1e-12, 1e12)
    max_halvings: int = 30

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.tol_rule not in ("upper-tail", "central"):
            raise ValueError(f"unknown tol_rule {self.tol_rule!r}")


def chi2_tolerance(dof, theta=0.95, rule="central"):
    if rule == "upper-tail":
        z = norm.ppf(1.0 - theta / 2.0)
    elif rule == "central":
        z = norm.ppf((1.0 + theta) / 2.0)
    else:
        raise ValueError(f"unknown tolerance rule {rule!r}")
    return float(z * np.sqrt(2.0 * dof))


def significant_count(f, rel):
    """Number of band values above ``rel * max``."""
    g = f.gamma_band
    if g.size == 0:
        return 0
    return int(np.count_nonzero(g > rel * g.max()))


def _newton_start(gamma, s2, dof, lo, hi):
    # each term switches off near sigma = 1/gamma; pick the sigma where the
    # step approximation of ||k||^2 crosses dof
    cs = np.cumsum(s2)
    j = int(np.searchsorted(cs, dof))
    j = min(j, gamma.size - 1)
    g = gamma[j] if gamma[j] > 0 else gamma[gamma > 0].min() if np.any(gamma > 0) else 1.0
    return float(np.clip(1.0 / g, lo, hi))


def select_chi2(f, s, cfg=None):
    """Newton root of ``||k(sigma)||^2 = dof`` with a halving line search."""
    cfg = cfg or Chi2Config()
    nb = f.n_band
    r = cfg.truncation if cfg.truncation is not None else significant_count(f, cfg.rank_threshold)
    r = min(r, nb)
    dof = float(cfg.dof_override) if cfg.dof_override is not None else float(min(f.m + f.p - f.n, r))
    tol = cfg.tol_override if cfg.tol_override is not None else chi2_tolerance(dof, cfg.theta, cfg.tol_rule)
    lo, hi = cfg.sigma_bounds
    g = f.gamma_band[nb - r:]
    sa = s.band[nb - r:]

    def F(sig):
        return float(chi2_functional(f, s, sig, r)[0]) - dof

    trace = []
    total = float(np.sum(sa ** 2))
    if r == 0 or total - dof < -tol:
        return SelectionResult(1.0 / lo, "chi2", 0, False, "no-root-clamped-max-reg", trace, dof, tol)
    if F(hi) > tol:
        return SelectionResult(1.0 / hi, "chi2", 0, False, "no-root-clamped-min-reg", trace, dof, tol)

    sig = _newton_start(g, sa ** 2, dof, lo, hi)
    Fk = F(sig)
    trace.append((1.0 / sig, Fk + dof))
    it = 0
    while abs(Fk) > tol:
        if it >= cfg.max_newton_iters:
            warnings.warn(f"chi2 Newton did not converge in {it} iterations", NonConvergenceWarning)
            return SelectionResult(1.0 / sig, "chi2", it, False, "ok", trace, dof, tol)
        ly2 = float(seminorm(f, s, sig, r))
        if ly2 <= 0:
            break
        step = 0.5 * sig ** 2 / ly2 * Fk
        beta = 1.0
        for _ in range(cfg.max_halvings):
            cand = sig * (1.0 + beta * step)
            if cand > 0:
                cand = min(max(cand, lo), hi)
                Fc = F(cand)
                if abs(Fc) <= abs(Fk):
                    break
            beta *= 0.5
        else:
            warnings.warn("chi2 line search failed to reduce the residual", NonConvergenceWarning)
            return SelectionResult(1.0 / sig, "chi2", it, False, "ok", trace, dof, tol)
        sig, Fk = cand, Fc
        it += 1
        trace.append((1.0 / sig, Fk + dof))
    return SelectionResult(1.0 / sig, "chi2", it, abs(Fk) <= tol, "ok", trace, dof, tol)


def alpha_grid(f, count=1000):
    """Log-spaced grid spanning the finite nonzero band values."""
    g = f.gamma_band
    g = g[g > 0]
    if g.size == 0:
        raise ValueError("no finite nonzero generalized singular values")
    hi = float(g.max())
    lo = max(float(g.min()), 1e-6 * hi)
    if hi / lo < 1.0 + 1e-12:
        lo, hi = lo / 10.0, hi * 10.0
    return np.logspace(np.log10(lo), np.log10(hi), int(count))


def _sorted_grid(grid):
    grid = np.unique(np.asarray(grid, dtype=float).ravel())
    if grid.size == 0:
        raise ValueError("empty alpha grid")
    if np.any(grid <= 0):
        raise ValueError("alpha grid values must be positive")
    return grid


def _argmin_larger(values):
    # index of the minimum, ties resolved toward the larger alpha (larger index)
    vmin = np.min(values)
    return int(np.flatnonzero(values == vmin)[-1])


def _flat(values):
    vmin, vmax = np.min(values), np.max(values)
    return vmax - vmin < 1e-12 * (1.0 + abs(vmin))


def _grid_result(method, grid, values):
    flat = _flat(values)
    # a flat objective ties everywhere: take the most regularized point
    k = grid.size - 1 if flat else _argmin_larger(values)
    status = "flat-objective" if flat else "ok"
    trace = list(zip(grid.tolist(), np.asarray(values).tolist()))
    return SelectionResult(float(grid[k]), method, 0, True, status, trace)


def upre_objective(f, s, sigmaL, r=None):
    """UPRE with constant terms dropped."""
    r = check_truncation(f, r)
    g = f.gamma_band[f.n_band - r:]
    sa = s.band[f.n_band - r:]
    w = 1.0 / (g ** 2 * np.asarray(sigmaL, dtype=float)[..., None] ** 2 + 1.0)
    return np.sum((sa * w) ** 2, axis=-1) - 2.0 * np.sum(w, axis=-1)


def select_upre(f, s, grid, r=None):
    grid = _sorted_grid(grid)
    return _grid_result("upre", grid, upre_objective(f, s, 1.0 / grid, r))


def gcv_objective(f, s, sigmaL, r=None):
    return residual_functional(f, s, sigmaL, r) / trace_functional(f, sigmaL, r) ** 2


def select_gcv(f, s, grid, r=None):
    grid = _sorted_grid(grid)
    T = trace_functional(f, 1.0 / grid, r)
    ok = T > 0
    if not np.all(ok):
        warnings.warn(f"GCV trace vanishes at {np.count_nonzero(~ok)} grid points; skipped",
                      DegenerateTraceWarning)
        if not np.any(ok):
            raise ValueError("GCV trace vanishes on the whole grid")
        grid, T = grid[ok], T[ok]
    N = residual_functional(f, s, 1.0 / grid, r)
    return _grid_result("gcv", grid, N / T ** 2)


def select_mdp(f, s, grid, rho=1.0, delta=None, r=None):
    """Match the weighted residual norm to ``rho * delta`` by interpolation in log alpha."""
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    delta = f.m if delta is None else delta
    target = rho * delta
    grid = _sorted_grid(grid)
    N = residual_functional(f, s, 1.0 / grid, r)
    trace = list(zip(grid.tolist(), N.tolist()))
    # N is nondecreasing in alpha; enforce against round-off
    N = np.maximum.accumulate(N)
    if target > N[-1]:
        return SelectionResult(float(grid[-1]), "mdp", 0, False, "no-root-clamped-max-reg", trace)
    if target < N[0]:
        return SelectionResult(float(grid[0]), "mdp", 0, False, "no-root-clamped-min-reg", trace)
    j = int(np.searchsorted(N, target, side="left"))
    if j == 0 or N[j] == target:
        return SelectionResult(float(grid[j]), "mdp", 0, True, "ok", trace)
    t0, t1 = np.log(grid[j - 1]), np.log(grid[j])
    w = (target - N[j - 1]) / (N[j] - N[j - 1])
    return SelectionResult(float(np.exp(t0 + w * (t1 - t0))), "mdp", 0, True, "ok", trace)


def lcurve_points(f, s, grid, r=None):
    """``(log ||Gt y - rt||, log ||L y||)`` along an ascending alpha grid."""
    sig = 1.0 / grid
    tiny = np.finfo(float).tiny
    x = 0.5 * np.log(np.maximum(residual_functional(f, s, sig, r), tiny))
    y = 0.5 * np.log(np.maximum(seminorm(f, s, sig, r), tiny))
    return x, y


def discrete_curvature(t, x, y):
    """Signed curvature at interior nodes by nonuniform three-point differences."""
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]

    def d1(v):
        return (-h1 / (h0 * (h0 + h1)) * v[:-2] + (h1 - h0) / (h0 * h1) * v[1:-1]
                + h0 / (h1 * (h0 + h1)) * v[2:])

    def d2(v):
        return 2.0 * (v[:-2] / (h0 * (h0 + h1)) - v[1:-1] / (h0 * h1) + v[2:] / (h1 * (h0 + h1)))

    dx, dy, ddx, ddy = d1(x), d1(y), d2(x), d2(y)
    speed = (dx ** 2 + dy ** 2) ** 1.5
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa = (dx * ddy - dy * ddx) / speed
    return np.where(speed > 0, kappa, -np.inf)


def select_lcurve(f, s, grid, r=None):
    """Point of maximum curvature of the log-log L-curve (interior grid nodes)."""
    grid = _sorted_grid(grid)
    if grid.size < 5:
        raise ValueError("L-curve needs at least 5 grid points")
    x, y = lcurve_points(f, s, grid, r)
    kappa = discrete_curvature(np.log(grid), x, y)
    trace = list(zip(grid[1:-1].tolist(), kappa.tolist()))
    kmax = np.max(kappa)
    if not kmax > 0:
        return SelectionResult(float(grid[grid.size // 2]), "lcurve", 0, False, "no-corner", trace)
    k = int(np.flatnonzero(kappa == kmax)[-1]) + 1
    return SelectionResult(float(grid[k]), "lcurve", 0, True, "ok", trace)


def select(method, f, s, grid=None, chi2=None, rho=1.0, delta=None, grid_count=1000, r=None):
    """Dispatch to one selector by tag."""
    if method == "chi2":
        return select_chi2(f, s, chi2)
    if method not in METHODS:
        raise ValueError(f"unknown selector {method!r}")
    grid = alpha_grid(f, grid_count) if grid is None else grid
    if method == "upre":
        return select_upre(f, s, grid, r)
    if method == "gcv":
        return select_gcv(f, s, grid, r)
    if method == "mdp":
        return select_mdp(f, s, grid, rho, delta, r)
    return select_lcurve(f, s, grid, r)
