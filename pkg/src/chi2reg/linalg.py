"""Dense decompositions used by every parameter-selection routine.

Both factor types expose the same *band view*, indexed the way the
generalized singular values are ordered (ascending):

* ``gamma_band`` holds the finite nonzero generalized singular values
  (plain singular values for the SVD), smallest first;
* ``U_aligned`` orders the left vectors so that ``U_aligned.T @ r`` yields
  the band coefficients first, then the coefficients attached to the
  infinite generalized singular values, then (only for ``m > n``) the
  residual-only tail;
* ``band_basis`` / ``inf_basis`` carry the solution directions.

Downstream code only touches these attributes, so the GSVD path and the
``L = I`` SVD path share one set of formulas.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import DecompositionFailure, DimensionMismatch, InvalidTruncation, RankDeficient

__all__ = [
    "GsvdFactors",
    "SvdFactors",
    "SpectralCoefficients",
    "compute_gsvd",
    "compute_svd",
    "reweight_gsvd",
    "spectral_coefficients",
    "filter_factors",
    "RANK_RTOL",
]

RANK_RTOL = 1e-12
_SQRT_HALF = np.sqrt(0.5)


def _as_matrix(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _complement(nu_or_mu):
    # sqrt(1 - x^2) without cancellation near x = 1
    x = np.clip(nu_or_mu, 0.0, 1.0)
    return np.sqrt((1.0 - x) * (1.0 + x))


def _sign_fixed_qr(a):
    q, r = np.linalg.qr(a)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


@dataclass(frozen=True, eq=False)
class GsvdFactors:
    """Joint decomposition ``Gt = U Ups X^T``, ``Lt = V M X^T``.

    ``nu`` and ``mu`` have length ``n`` and follow the column indexing of the
    decomposition: ``nu[:q] == 0``, ``mu[p:] == 0``, ``nu[p:] == 1``,
    ``mu[:q] == 1``.  ``Z`` is ``inv(X.T)``.
    """

    U: np.ndarray
    V: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    nu: np.ndarray
    mu: np.ndarray

    @property
    def m(self):
        return self.U.shape[0]

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.V.shape[0]

    @property
    def q(self):
        return self.n - self.m

    @property
    def infinite(self):
        """Boolean sentinel mask marking the ``n - p`` infinite values."""
        mask = np.zeros(self.n, dtype=bool)
        mask[self.p:] = True
        return mask

    @cached_property
    def gamma(self):
        """``nu / mu`` over all ``n`` indices; ``inf`` only for reporting."""
        g = np.zeros(self.n)
        band = slice(self.q, self.p)
        g[band] = self.nu[band] / self.mu[band]
        g[self.p:] = np.inf
        return g

    # band view --------------------------------------------------------------
    @property
    def n_band(self):
        return self.p - self.q

    @property
    def n_inf(self):
        return self.n - self.p

    @property
    def nu_band(self):
        return self.nu[self.q:self.p]

    @property
    def mu_band(self):
        return self.mu[self.q:self.p]

    @property
    def gamma_band(self):
        return self.gamma[self.q:self.p]

    @property
    def U_aligned(self):
        return self.U

    @property
    def band_basis(self):
        return self.Z[:, self.q:self.p]

    @property
    def inf_basis(self):
        return self.Z[:, self.p:]

    def upsilon_tilde(self):
        """The ``m x n`` matrix ``[0, diag(nu_{q+1..n})]``."""
        out = np.zeros((self.m, self.n))
        out[:, self.q:] = np.diag(self.nu[self.q:])
        return out

    def m_tilde(self):
        """The ``p x n`` matrix ``[diag(mu_{1..p}), 0]``."""
        out = np.zeros((self.p, self.n))
        out[:, :self.p] = np.diag(self.mu[:self.p])
        return out

    def reconstruct(self):
        """``(U Ups X^T, V M X^T)``; used by the property checks."""
        Xt = self.X.T
        return self.U @ (self.upsilon_tilde() @ Xt), self.V @ (self.m_tilde() @ Xt)


@dataclass(frozen=True, eq=False)
class SvdFactors:
    """``Gt = U diag(sigma) V^T`` with ``sigma`` nonincreasing (``L = I`` path)."""

    U: np.ndarray
    V: np.ndarray
    sigma: np.ndarray

    @property
    def m(self):
        return self.U.shape[0]

    @property
    def n(self):
        return self.V.shape[0]

    @property
    def p(self):
        return self.n

    @property
    def q(self):
        return max(self.n - self.m, 0)

    @property
    def n_band(self):
        return min(self.m, self.n)

    @property
    def n_inf(self):
        return 0

    @property
    def gamma_band(self):
        return self.sigma[::-1]

    @property
    def nu_band(self):
        return self.gamma_band

    @property
    def mu_band(self):
        return np.ones(self.n_band)

    @cached_property
    def U_aligned(self):
        k = self.n_band
        return np.hstack([self.U[:, :k][:, ::-1], self.U[:, k:]])

    @cached_property
    def band_basis(self):
        return self.V[:, :self.n_band][:, ::-1]

    @property
    def inf_basis(self):
        return np.zeros((self.n, 0))


@dataclass(frozen=True)
class SpectralCoefficients:
    """Projected data ``s = U_aligned^T r`` split into band / infinite / tail."""

    s: np.ndarray
    rnorm2: float
    n_band: int
    n_inf: int

    @property
    def band(self):
        return self.s[:self.n_band]

    @property
    def inf(self):
        return self.s[self.n_band:self.n_band + self.n_inf]

    @property
    def tail(self):
        return self.s[self.n_band + self.n_inf:]


def _choose_split(nu1):
    """Number of leading indices whose vectors come from the ``Gt`` block.

    The hand-off happens near ``nu = 1/sqrt(2)`` at the widest spectral gap so
    that clusters are never split between the two SVDs.
    """
    n = nu1.size
    lo = int(np.count_nonzero(nu1 < 0.5))
    hi = int(np.count_nonzero(nu1 <= 0.87))
    best_k, best_gap = int(np.count_nonzero(nu1 <= _SQRT_HALF)), -1.0
    for k in range(lo, hi + 1):
        gap = 1.0 if k in (0, n) else nu1[k] - nu1[k - 1]
        if gap > best_gap:
            best_k, best_gap = k, gap
    return best_k


def compute_gsvd(Gt, Lt, rank_rtol=RANK_RTOL):
    """GSVD of the pair ``(Gt, Lt)`` with ``m <= n``, ``p <= n``, ``m + p >= n``.

    Uses a thin QR of the stacked matrix, then SVDs of both orthonormal
    blocks (a CS decomposition).  Small ``nu`` come from the ``Gt`` block and
    small ``mu`` from the ``Lt`` block, which keeps both ends accurate.

    Raises
    ------
    DimensionMismatch
        Shapes violate the size conditions.
    RankDeficient
        ``[Gt; Lt]`` has numerical rank below ``n``.
    """
    Gt = _as_matrix(Gt, "Gt")
    Lt = _as_matrix(Lt, "Lt")
    m, n = Gt.shape
    p = Lt.shape[0]
    if Lt.shape[1] != n:
        raise DimensionMismatch(f"column counts differ: {n} vs {Lt.shape[1]}")
    if m > n or p > n or m + p < n:
        raise DimensionMismatch(f"need m <= n, p <= n, m + p >= n; got m={m}, n={n}, p={p}")
    q = n - m

    try:
        Q, R = np.linalg.qr(np.vstack([Gt, Lt]))
        sv = sla.svdvals(R)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - backend failure
        raise DecompositionFailure(str(exc)) from exc
    if sv[-1] <= rank_rtol * sv[0]:
        raise RankDeficient(f"stacked matrix singular values span {sv[0]:.3e} .. {sv[-1]:.3e}")

    Q1, Q2 = Q[:m], Q[m:]
    try:
        Uc, c, Wct = np.linalg.svd(Q1, full_matrices=True)
        Vs, s2, Yt = np.linalg.svd(Q2, full_matrices=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise DecompositionFailure(str(exc)) from exc
    c = np.clip(c, 0.0, 1.0)
    s2 = np.clip(s2, 0.0, 1.0)

    # reorder both to ascending nu (equivalently descending mu)
    Wc = Wct.T
    W1 = np.hstack([Wc[:, m:], Wc[:, :m][:, ::-1]])
    nu1 = np.concatenate([np.zeros(q), c[::-1]])
    U1 = Uc[:, ::-1]
    Y = Yt.T
    mu2 = np.concatenate([s2, np.zeros(n - p)])

    k = _choose_split(nu1)
    W = _sign_fixed_qr(np.hstack([W1[:, :k], Y[:, k:]]))

    nu = np.empty(n)
    mu = np.empty(n)
    nu[:k] = nu1[:k]
    mu[:k] = _complement(nu1[:k])
    mu[k:] = mu2[k:]
    nu[k:] = _complement(mu2[k:])
    nu[:q], mu[:q] = 0.0, 1.0
    nu[p:], mu[p:] = 1.0, 0.0
    # enforce the monotone ordering against round-off at the hand-off
    nu[q:p] = np.maximum.accumulate(nu[q:p])
    mu[q:p] = np.minimum.accumulate(mu[q:p])

    ku = max(k - q, 0)
    U = np.hstack([U1[:, :ku], (Q1 @ W[:, q + ku:]) / nu[q + ku:]])
    kv = min(k, p)
    V = np.hstack([(Q2 @ W[:, :kv]) / mu[:kv], Vs[:, kv:p]])
    U = _sign_fixed_qr(U)
    V = _sign_fixed_qr(V)

    X = R.T @ W
    Z = sla.solve_triangular(R, W, lower=False)
    return GsvdFactors(U=U, V=V, X=X, Z=Z, nu=nu, mu=mu)


def reweight_gsvd(f, w):
    """GSVD of ``(w * Gt, Lt)`` from that of ``(Gt, Lt)`` for a scalar ``w > 0``.

    Only the column normalisation changes: ``U`` and ``V`` are shared.
    """
    if not w > 0:
        raise ValueError("weight must be positive")
    c = np.sqrt((w * f.nu) ** 2 + f.mu ** 2)
    return GsvdFactors(U=f.U, V=f.V, X=f.X * c, Z=f.Z / c, nu=w * f.nu / c, mu=f.mu / c)


def compute_svd(Gt):
    """Full SVD with nonincreasing singular values."""
    Gt = _as_matrix(Gt, "Gt")
    try:
        U, sigma, Vt = np.linalg.svd(Gt, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise DecompositionFailure(str(exc)) from exc
    return SvdFactors(U=U, V=Vt.T, sigma=sigma)


def spectral_coefficients(f, rt):
    """Project the weighted residual onto the aligned left vectors."""
    rt = np.asarray(rt, dtype=float).ravel()
    if rt.size != f.m:
        raise DimensionMismatch(f"residual has length {rt.size}, expected {f.m}")
    s = f.U_aligned.T @ rt
    return SpectralCoefficients(s=s, rnorm2=float(rt @ rt), n_band=f.n_band, n_inf=f.n_inf)


def check_truncation(f, r):
    """Resolve the truncation count ``r`` (``None`` means no truncation)."""
    nb = f.n_band
    if r is None:
        return nb
    r = int(r)
    if r < 0 or r > nb:
        raise InvalidTruncation(f"truncation r={r} outside [0, {nb}]")
    return r


def filter_factors(f, sigmaL, r=None):
    """Filter factors over the band and infinite indices (zeros, ratio, ones)."""
    if not sigmaL > 0:
        raise ValueError("sigmaL must be positive")
    r = check_truncation(f, r)
    nb = f.n_band
    out = np.ones(nb + f.n_inf)
    g2 = f.gamma_band[nb - r:] ** 2
    out[:nb - r] = 0.0
    out[nb - r:nb] = g2 / (g2 + sigmaL ** -2.0)
    return out
