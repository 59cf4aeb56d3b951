"""Synthetic test problems, regularizers, noise models and downsampling.

Random streams: every noise copy ``c`` draws from its own Philox generator
keyed by ``SeedSequence(seed, spawn_key=(c,))``, so copies are reproducible
individually and independent of how many are generated or in what order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import xlogy

from .errors import DegenerateRay, DimensionMismatch, StationInsideCell
from .tikhonov import ProblemInstance

__all__ = [
    "copy_rng",
    "gravity1d",
    "downsample_stride",
    "downsample_prefix",
    "select_rows",
    "trace_ray",
    "ray_row",
    "random_ray",
    "tomo",
    "two_gaussian_phantom",
    "Grid2D",
    "survey_grid",
    "rectangular_body",
    "gravity2d_forward",
    "gravity2d_problem",
    "derivative_operator",
    "derivative_null_basis",
    "check_invertible",
    "add_noise_uniform",
    "add_noise_mixed",
    "NoiseSpec",
    "GRAV_CONST",
]

GRAV_CONST = 6.674e-11  # m^3 kg^-1 s^-2
SI_TO_MGAL = 1e5
GCC_TO_KGM3 = 1e3


def copy_rng(seed, copy):
    """Independent generator for noise copy ``copy`` of stream ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(copy),))))


# regularizers ---------------------------------------------------------------

def derivative_operator(n, order=0):
    """Scaled-free difference operator of size ``(n - order) x n``."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if n <= order:
        raise DimensionMismatch(f"n={n} too small for order {order}")
    if order == 0:
        return np.eye(n)
    stencil = {1: [-1.0, 1.0], 2: [1.0, -2.0, 1.0]}[order]
    p = n - order
    L = np.zeros((p, n))
    rows = np.arange(p)
    for k, c in enumerate(stencil):
        L[rows, rows + k] = c
    return L


def derivative_null_basis(n, order):
    """Orthonormal basis of the null space of ``derivative_operator(n, order)``."""
    if order == 0:
        return np.zeros((n, 0))
    t = np.linspace(0.0, 1.0, n)
    B = np.vander(t, order, increasing=True)
    return np.linalg.qr(B)[0]


def check_invertible(G, L, null_basis=None, rtol=1e-12):
    """True when ``null(G)`` and ``null(L)`` intersect only in zero."""
    G = np.asarray(G, dtype=float)
    if null_basis is None:
        import scipy.linalg as sla

        null_basis = sla.null_space(np.asarray(L, dtype=float))
    if null_basis.shape[1] == 0:
        return True
    sv = np.linalg.svd(G @ null_basis, compute_uv=False)
    return bool(sv.min() > rtol * np.linalg.norm(G))


# 1-D gravity ----------------------------------------------------------------

def gravity1d(n, z=0.75, order=0, kernel="standard"):
    """Midpoint-rule discretisation of the 1-D gravity surveying problem on [0, 1].

    ``kernel="standard"`` uses ``z (z^2 + (s-t)^2)^{-3/2}``; ``"inverse-depth"``
    divides by ``z`` instead of multiplying.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    h = 1.0 / n
    t = (np.arange(n) + 0.5) * h
    diff2 = (t[:, None] - t[None, :]) ** 2
    scale = {"standard": z, "inverse-depth": 1.0 / z}[kernel]
    G = h * scale * (z ** 2 + diff2) ** -1.5
    x = np.sin(np.pi * t) + 0.5 * np.sin(2.0 * np.pi * t)
    d = G @ x
    L = derivative_operator(n, order)
    if not check_invertible(G, L, derivative_null_basis(n, order)):
        raise ValueError("generated problem violates the invertibility condition")
    return ProblemInstance(G=G, d_obs=d.copy(), Wd=np.ones(n), L=L, m_exact=x, d_clean=d,
                           meta={"kind": "gravity1d", "n": n, "z": z, "order": order, "kernel": kernel})


def downsample_stride(d, stride):
    """Entries ``0, stride, 2*stride, ...`` (works on vectors or matrix rows)."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return np.asarray(d)[::stride]


def downsample_prefix(d, m):
    if m < 1 or m > len(d):
        raise ValueError(f"prefix length {m} outside [1, {len(d)}]")
    return np.asarray(d)[:m]


def select_rows(problem, rows, d_obs=None):
    """Restrict a problem to a subset of data rows (downsampling)."""
    rows = np.asarray(rows)
    Wd = problem.Wd[rows] if problem.Wd.ndim == 1 else problem.Wd[np.ix_(rows, rows)]
    d = problem.d_obs[rows] if d_obs is None else d_obs
    dc = None if problem.d_clean is None else problem.d_clean[rows]
    return ProblemInstance(problem.G[rows], d, Wd, problem.L, problem.m0, problem.m_exact, dc,
                           dict(problem.meta, m=int(rows.size)))


# tomography -----------------------------------------------------------------

def _clip_to_unit_square(p0, u):
    t_lo, t_hi = -np.inf, np.inf
    for k in range(2):
        if u[k] == 0.0:
            if not 0.0 <= p0[k] <= 1.0:
                return None
            continue
        a, b = (0.0 - p0[k]) / u[k], (1.0 - p0[k]) / u[k]
        t_lo, t_hi = max(t_lo, min(a, b)), min(t_hi, max(a, b))
    if t_hi <= t_lo:
        return None
    return t_lo, t_hi


def trace_ray(p0, u, N):
    """Exact traversal of the line ``p0 + t u`` through an ``N x N`` grid on [0,1]^2.

    Returns ``(cells, lengths)`` with ``cells = iy * N + ix``.
    """
    p0 = np.asarray(p0, dtype=float)
    u = np.asarray(u, dtype=float)
    u = u / np.hypot(*u)
    span = _clip_to_unit_square(p0, u)
    if span is None:
        return np.zeros(0, dtype=int), np.zeros(0)
    t0, t1 = span
    ts = [np.array([t0, t1])]
    lines = np.arange(N + 1) / N
    for k in range(2):
        if u[k] != 0.0:
            tk = (lines - p0[k]) / u[k]
            ts.append(tk[(tk > t0) & (tk < t1)])
    t = np.unique(np.concatenate(ts))
    seg = np.diff(t)
    keep = seg > 1e-14
    mid = 0.5 * (t[:-1] + t[1:])[keep]
    seg = seg[keep]
    pts = p0[None, :] + mid[:, None] * u[None, :]
    ij = np.clip(np.floor(pts * N).astype(int), 0, N - 1)
    cells = ij[:, 1] * N + ij[:, 0]
    return cells, seg


def ray_row(p0, u, N):
    row = np.zeros(N * N)
    cells, seg = trace_ray(p0, u, N)
    np.add.at(row, cells, seg)
    return row


def random_ray(rng):
    """Random boundary entry point and inward direction."""
    side = int(rng.integers(4))
    a = float(rng.random())
    theta = float(rng.uniform(-0.5 * np.pi, 0.5 * np.pi))
    p0, normal = {
        0: ((a, 0.0), 0.5 * np.pi),
        1: ((1.0, a), np.pi),
        2: ((a, 1.0), -0.5 * np.pi),
        3: ((0.0, a), 0.0),
    }[side]
    phi = normal + theta
    return np.array(p0), np.array([math.cos(phi), math.sin(phi)])


def two_gaussian_phantom(N, bumps=((1.0, 0.35, 0.40, 0.12), (0.6, 0.70, 0.65, 0.08))):
    """Cell-centre samples of a sum of isotropic Gaussians ``(amp, cx, cy, width)``."""
    c = (np.arange(N) + 0.5) / N
    X, Y = np.meshgrid(c, c)
    img = np.zeros((N, N))
    for amp, cx, cy, w in bumps:
        img += amp * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * w ** 2))
    return img.ravel()


def tomo(N, m_rays=None, seed=0, order=1, bumps=None):
    """Random-ray tomography with an ``N x N`` two-Gaussian phantom."""
    n = N * N
    m_rays = n if m_rays is None else m_rays
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(2**31,))))
    G = np.zeros((m_rays, n))
    for i in range(m_rays):
        for _ in range(1000):
            p0, u = random_ray(rng)
            row = ray_row(p0, u, N)
            if row.sum() > 1e-9:
                break
        else:  # pragma: no cover
            raise DegenerateRay("could not draw a non-degenerate ray")
        G[i] = row
    x = two_gaussian_phantom(N) if bumps is None else two_gaussian_phantom(N, bumps)
    d = G @ x
    L = derivative_operator(n, order)
    return ProblemInstance(G=G, d_obs=d.copy(), Wd=np.ones(m_rays), L=L, m_exact=x, d_clean=d,
                           meta={"kind": "tomo", "N": N, "n": n, "m": m_rays, "seed": seed, "order": order})


# 2-D prism gravity ----------------------------------------------------------

@dataclass(frozen=True)
class Grid2D:
    """Rectangular cross-section of ``n_rows x n_cols`` cells below a station line.

    Cell ``j = row * n_cols + col``; row 0 is the top layer starting at depth 0.
    Depths are positive downwards, all lengths in metres.
    """

    n_cols: int
    n_rows: int
    cell_width: float
    cell_height: float
    stations: np.ndarray = field(repr=False)
    station_depth: float = 0.0

    def __post_init__(self):
        if min(self.n_cols, self.n_rows) < 1 or min(self.cell_width, self.cell_height) <= 0:
            raise ValueError("grid dimensions must be positive")
        st = np.asarray(self.stations, dtype=float)
        if st.ndim != 1 or st.size < 1 or np.any(np.diff(st) <= 0):
            raise ValueError("stations must be strictly increasing")
        object.__setattr__(self, "stations", st)

    @property
    def n(self):
        return self.n_cols * self.n_rows

    @property
    def m(self):
        return self.stations.size

    def cell_centers(self):
        col = np.tile(np.arange(self.n_cols), self.n_rows)
        row = np.repeat(np.arange(self.n_rows), self.n_cols)
        return (col + 0.5) * self.cell_width, (row + 0.5) * self.cell_height

    def cell_depths(self):
        return self.cell_centers()[1] - self.station_depth

    def as_image(self, v):
        return np.asarray(v).reshape(self.n_rows, self.n_cols)


def survey_grid():
    """50 x 5 cells of 10 m with 50 stations at the column centres."""
    return Grid2D(n_cols=50, n_rows=5, cell_width=10.0, cell_height=10.0,
                  stations=(np.arange(50) + 0.5) * 10.0)


def rectangular_body(grid, x_range=(220.0, 280.0), z_range=(10.0, 40.0), density=1.0):
    """Model vector with ``density`` inside the given box (cell centres)."""
    xc, zc = grid.cell_centers()
    inside = (xc > x_range[0]) & (xc < x_range[1]) & (zc > z_range[0]) & (zc < z_range[1])
    return np.where(inside, density, 0.0)


def _prism_F(x, z):
    # double antiderivative of z / (x^2 + z^2)
    with np.errstate(divide="ignore", invalid="ignore"):
        at = np.where(z == 0.0, 0.0, z * np.arctan(x / np.where(z == 0.0, 1.0, z)))
    return at + xlogy(0.5 * x, x ** 2 + z ** 2)


def gravity2d_forward(grid):
    """Vertical gravity (mGal) at each station from unit-density (1 g/cm^3) cells."""
    xs = grid.stations[:, None]
    col = np.tile(np.arange(grid.n_cols), grid.n_rows)[None, :]
    row = np.repeat(np.arange(grid.n_rows), grid.n_cols)[None, :]
    x1 = col * grid.cell_width - xs
    x2 = x1 + grid.cell_width
    z1 = row * grid.cell_height - grid.station_depth
    z2 = z1 + grid.cell_height
    if np.any((x1 < 0) & (x2 > 0) & (z1 < 0) & (z2 > 0)):
        raise StationInsideCell("a station lies strictly inside a cell")
    z1 = np.broadcast_to(z1, x1.shape)
    z2 = np.broadcast_to(z2, x1.shape)
    box = _prism_F(x2, z2) - _prism_F(x1, z2) - _prism_F(x2, z1) + _prism_F(x1, z1)
    return 2.0 * GRAV_CONST * GCC_TO_KGM3 * SI_TO_MGAL * box


def gravity2d_problem(grid=None, model=None):
    grid = survey_grid() if grid is None else grid
    G = gravity2d_forward(grid)
    x = rectangular_body(grid) if model is None else np.asarray(model, dtype=float)
    d = G @ x
    return ProblemInstance(G=G, d_obs=d.copy(), Wd=np.ones(grid.m), L=np.eye(grid.n), m_exact=x, d_clean=d,
                           meta={"kind": "gravity2d", "m": grid.m, "n": grid.n})


# noise ----------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "uniform-max"
    levels: tuple = (0.01,)
    seed: int = 0
    copies: int = 1

    def __post_init__(self):
        if self.kind not in ("uniform-max", "mixed"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if any(v < 0 for v in self.levels) or self.copies < 1:
            raise ValueError("noise levels must be nonnegative and copies >= 1")
        need = 1 if self.kind == "uniform-max" else 2
        if len(self.levels) != need:
            raise ValueError(f"{self.kind} noise needs {need} level(s)")

    def apply(self, d, copies=None, first=0):
        copies = self.copies if copies is None else copies
        if self.kind == "uniform-max":
            return add_noise_uniform(d, self.levels[0], self.seed, copies, first)
        return add_noise_mixed(d, self.levels[0], self.levels[1], self.seed, copies, first)


def _draws(m, seed, copies, first):
    return np.stack([copy_rng(seed, c).standard_normal(m) for c in range(first, first + copies)])


def add_noise_uniform(d, eta, seed=0, copies=1, first=0):
    """``d + eta * max(d) * Theta``; returns ``(copies x m array, Wd vector)``."""
    d = np.asarray(d, dtype=float)
    scale = eta * np.max(d)
    noisy = d[None, :] + scale * _draws(d.size, seed, copies, first)
    wd = np.full(d.size, 1.0 / scale) if scale > 0 else np.ones(d.size)
    return noisy, wd


def add_noise_mixed(d, eta1, eta2, seed=0, copies=1, first=0):
    """``d_i + (eta1 d_i + eta2 ||d||) Theta_i``; ``Wd`` inverts the generating std."""
    d = np.asarray(d, dtype=float)
    std = eta1 * d + eta2 * np.linalg.norm(d)
    noisy = d[None, :] + std[None, :] * _draws(d.size, seed, copies, first)
    sd = eta1 * np.abs(d) + eta2 * np.linalg.norm(d)
    wd = np.where(sd > 0, 1.0 / np.where(sd > 0, sd, 1.0), 1.0)
    return noisy, wd
