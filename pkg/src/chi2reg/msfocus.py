"""Iterative minimum-support (MS) focusing inversion.

Each iteration rescales the columns of the weighted operator by the depth
weighting times the current MS stabilizer, takes one SVD of the scaled
matrix, picks ``alpha`` with the configured selector, solves in the scaled
variables and maps back.  Solving the right-scaled system is equivalent to
the Tikhonov problem with diagonal regularizer ``D = W_depth L_k`` and needs
no GSVD.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SelectorFailure
from .linalg import compute_svd, spectral_coefficients
from .regparam import Chi2Config, alpha_grid, select
from .tikhonov import solve_spectral

__all__ = [
    "MsConfig",
    "MsState",
    "depth_weighting",
    "ms_operator",
    "initial_alpha",
    "ms_objective",
    "ms_step",
    "ms_initialize",
    "ms_invert",
    "relative_error",
]

log = logging.getLogger(__name__)


@dataclass
class MsConfig:
    beta: float = 0.6
    epsilon: float = 0.02
    tau: float = 0.01
    max_iters: int = 20
    bounds: tuple = (0.0, 1.0)
    selector: str = "chi2"
    chi2: Chi2Config = field(default_factory=Chi2Config)
    grid_count: int = 1000
    rho: float = 1.0
    init_mode: str = "regularized-m0"
    stabilizer_ref: str = "zero"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if not self.bounds[0] < self.bounds[1]:
            raise ValueError("bounds must satisfy lo < hi")
        if self.init_mode not in ("regularized-m0", "zero"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if self.stabilizer_ref not in ("m0", "previous", "zero"):
            raise ValueError(f"unknown stabilizer_ref {self.stabilizer_ref!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class MsState:
    k: int
    m_k: np.ndarray
    m_prev: np.ndarray
    m_ref: np.ndarray
    wdepth: np.ndarray
    alpha_k: float | None = None
    L_k: np.ndarray | None = None
    P_k: float | None = None
    history: list = field(default_factory=list)
    stop_reason: str = "none"
    alpha_0: float | None = None
    m_init: np.ndarray | None = None


def depth_weighting(grid, beta=0.6):
    """Diagonal ``z_j^{-beta}`` at the cell-centre depths."""
    z = grid.cell_depths()
    if np.any(z <= 0):
        raise ValueError("cell depths must be positive")
    return z ** (-beta)


def ms_operator(m_curr, m_ref, epsilon):
    """Diagonal MS stabilizer ``((m - m_ref)^2 + eps^2)^{-1/2}``."""
    diff = np.asarray(m_curr, dtype=float) - np.asarray(m_ref, dtype=float)
    return 1.0 / np.sqrt(diff ** 2 + epsilon ** 2)


def initial_alpha(gamma, m, n):
    """``(n/m) * max(gamma) / mean(gamma)``."""
    gamma = np.asarray(gamma, dtype=float)
    return (n / m) * gamma.max() / gamma.mean()


def relative_error(m_est, m_exact):
    return float(np.linalg.norm(np.asarray(m_exact) - np.asarray(m_est)) / np.linalg.norm(m_exact))


def ms_objective(problem, m, m_prev, D, alpha):
    """Weighted misfit plus ``alpha^2 ||D (m - m_prev)||^2``."""
    res = problem.weight(problem.G @ m - problem.d_obs)
    return float(res @ res + alpha ** 2 * np.sum((D * (m - m_prev)) ** 2))


def _select_alpha(f, s, cfg):
    return select(cfg.selector, f, s, chi2=cfg.chi2, rho=cfg.rho, delta=f.m, grid_count=cfg.grid_count)


def ms_initialize(problem, grid, cfg):
    """Starting state per ``cfg.init_mode``.

    ``regularized-m0`` solves once with the fixed ``initial_alpha`` and depth
    weighting only; that solve counts as iteration 1 and takes part in the
    stopping tests.  ``zero`` starts from ``m = 0`` at iteration 0.
    """
    wdepth = depth_weighting(grid, cfg.beta)
    n = problem.G.shape[1]
    zero = np.zeros(n)
    if cfg.init_mode == "zero":
        return MsState(k=0, m_k=zero, m_prev=zero, m_ref=zero.copy(), wdepth=wdepth, m_init=zero.copy())
    f0 = compute_svd(problem.Gt / wdepth)
    alpha0 = float(initial_alpha(f0.sigma, *problem.G.shape))
    s0 = spectral_coefficients(f0, problem.weight(problem.d_obs))
    m0 = np.clip(solve_spectral(f0, s0, alpha0).y / wdepth, *cfg.bounds)
    P0 = ms_objective(problem, m0, zero, wdepth, alpha0)
    change = float(np.linalg.norm(m0))
    rec = {"k": 1, "alpha": alpha0, "P": P0, "change": change,
           "rel_change": change / (1.0 + change), "status": "fixed", "selector_iters": 0}
    return MsState(k=1, m_k=m0, m_prev=zero, m_ref=m0.copy(), wdepth=wdepth, alpha_k=alpha0,
                   L_k=np.ones(n), P_k=P0, history=[rec], alpha_0=alpha0, m_init=m0.copy())


def ms_step(state, problem, cfg):
    """One focusing iteration; returns the new state (input is not modified)."""
    if cfg.stabilizer_ref == "previous":
        ref = state.m_prev
    elif cfg.stabilizer_ref == "zero":
        ref = np.zeros_like(state.m_k)
    else:
        ref = state.m_ref
    Lk = ms_operator(state.m_k, ref, cfg.epsilon)
    D = state.wdepth * Lk
    f = compute_svd(problem.Gt / D)
    rt = problem.weight(problem.d_obs - problem.G @ state.m_k)
    s = spectral_coefficients(f, rt)
    try:
        sel = _select_alpha(f, s, cfg)
    except Exception as exc:
        raise SelectorFailure(str(exc), iteration=state.k + 1) from exc
    w = solve_spectral(f, s, sel.alpha).y
    m_new = np.clip(state.m_k + w / D, *cfg.bounds)
    P = ms_objective(problem, m_new, state.m_k, D, sel.alpha)
    change = float(np.linalg.norm(m_new - state.m_k))
    rec = {"k": state.k + 1, "alpha": sel.alpha, "P": P, "change": change,
           "rel_change": change / (1.0 + float(np.linalg.norm(m_new))), "status": sel.status,
           "selector_iters": sel.iterations}
    return replace(state, k=state.k + 1, m_k=m_new, m_prev=state.m_k, alpha_k=sel.alpha, L_k=Lk, P_k=P,
                   history=state.history + [rec])


def ms_invert(problem, grid, cfg=None):
    """Run the MS iteration to one of the stopping rules.

    Stopping tests compare consecutive iterates ``m^(k-1), m^(k)`` for
    ``k >= 2``: (i) ``P_{k-1} - P_k < tau (1 + P_k)``,
    (ii) ``||m^(k-1) - m^(k)|| < sqrt(tau) (1 + ||m^(k)||)``, (iii) ``k = K``.
    """
    cfg = cfg or MsConfig()
    state = ms_initialize(problem, grid, cfg)
    tau = cfg.tau
    while state.k < cfg.max_iters:
        P_old = state.P_k
        state = ms_step(state, problem, cfg)
        if state.k >= 2:
            if P_old - state.P_k < tau * (1.0 + state.P_k):
                return replace(state, stop_reason="func-decrease")
            if state.history[-1]["change"] < np.sqrt(tau) * (1.0 + np.linalg.norm(state.m_k)):
                return replace(state, stop_reason="model-change")
    return replace(state, stop_reason="max-iters")
