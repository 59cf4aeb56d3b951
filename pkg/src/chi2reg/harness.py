"""Experiment runners: selector benchmarks, MS inversions and the self-test.

Each runner takes an :class:`ExperimentConfig` and returns a :class:`RunOutput`
holding aggregate rows (one per table cell), per-copy detail rows and sample
arrays for plotting.  Work fans out over a process pool of width
``cfg.jobs``; results are sorted by key before aggregation so the numbers do
not depend on the pool width.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import io
from .errors import Chi2RegError, ConfigError
from .linalg import SvdFactors, compute_gsvd, compute_svd, reweight_gsvd, spectral_coefficients
from .msfocus import MsConfig, ms_invert, relative_error
from .problems import add_noise_mixed, add_noise_uniform, gravity1d, gravity2d_problem, survey_grid, tomo
from .regparam import Chi2Config, METHODS, alpha_grid, select
from .tikhonov import solve_spectral

__all__ = [
    "ExperimentConfig",
    "RunOutput",
    "DEFAULTS",
    "build_config",
    "run_bench_1d",
    "run_bench_tomo",
    "run_invert_2d",
    "run_selftest",
    "run_experiment",
    "summarize",
]

log = logging.getLogger(__name__)

KINDS = ("bench-1d", "bench-tomo", "invert-2d", "selftest")

DEFAULTS = {
    "bench-1d": {
        "copies": 25, "selectors": ("upre", "gcv", "chi2"), "noise": (0.1, 0.01),
        "params": {"n": 3200, "depth": 0.75, "orders": (0, 1, 2), "strides": (1, 2, 4, 8, 16),
                   "grid_count": 200, "theta": 0.90, "tol_rule": "central", "samples": 1},
    },
    "bench-tomo": {
        "copies": 10, "selectors": ("upre", "gcv", "chi2"), "noise": (0.02, 0.01),
        "params": {"N": 60, "prefixes": (3600, 2700, 1800), "order": 1, "grid_count": 200,
                   "theta": 0.90, "tol_rule": "central", "ray_seed": 0, "samples": 1},
    },
    "invert-2d": {
        "copies": 50, "selectors": ("upre", "gcv", "chi2", "mdp", "lcurve"),
        "noise": ((0.01, 0.001), (0.03, 0.005), (0.05, 0.01)),
        "params": {"variants": ("nonzero", "zero", "one-step"), "grid_count": 1000, "theta": 0.95,
                   "tol_rule": "central",
                   "beta": 0.6, "epsilon": 0.02, "tau": 0.01, "max_iters": 20,
                   "stabilizer_ref": "zero", "samples": (0,)},
    },
    "selftest": {"copies": 1, "selectors": tuple(METHODS), "noise": (), "params": {}},
}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    copies: int | None = None
    selectors: tuple | None = None
    noise: tuple | None = None
    jobs: int = 1
    out: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        base = DEFAULTS[self.kind]
        self.copies = base["copies"] if self.copies is None else int(self.copies)
        self.selectors = tuple(base["selectors"] if self.selectors is None else self.selectors)
        self.noise = tuple(base["noise"] if self.noise is None else self.noise)
        self.params = {**base["params"], **(self.params or {})}
        bad = [s for s in self.selectors if s not in METHODS]
        if bad:
            raise ConfigError(f"unknown selector(s) {bad}")
        if self.copies < 1 or self.jobs < 1:
            raise ConfigError("copies and jobs must be >= 1")

    def identity(self):
        """Settings that determine the numbers (no output path, no pool width)."""
        d = asdict(self)
        d.pop("out")
        d.pop("jobs")
        return d

    @property
    def hash(self):
        return io.config_hash(self.identity())


@dataclass
class RunOutput:
    aggregate: list
    details: list = field(default_factory=list)
    samples: dict = field(default_factory=dict)
    failures: int = 0
    elapsed: float = 0.0


def _tuple_of(v, scalar=float):
    if isinstance(v, str):
        return tuple(scalar(x) for x in v.replace(";", ",").split(",") if x.strip())
    if isinstance(v, (int, float)):
        return (scalar(v),)
    return tuple(v)


def _noise_value(text):
    text = str(text).strip()
    if ":" in text:
        return tuple(float(x) for x in text.split(":"))
    return float(text)


def parse_noise(text):
    """``"0.1,0.01"`` or ``"0.01:0.001,0.05:0.01"`` to a tuple of levels."""
    return tuple(_noise_value(x) for x in str(text).split(",") if x.strip())


def build_config(kind, file_cfg=None, **overrides):
    """Merge a parsed INI config with CLI overrides (non-``None`` values win)."""
    file_cfg = file_cfg or {}
    exp = dict(file_cfg.get("experiment", {}))
    kind = overrides.pop("kind", None) or kind or exp.get("kind")
    params = {}
    for k, v in file_cfg.get("params", {}).items():
        default = DEFAULTS.get(kind, {}).get("params", {}).get(k)
        if isinstance(default, tuple) and not isinstance(v, tuple):
            scalar = type(default[0]) if default else float
            params[k] = _tuple_of(v, scalar if scalar in (int, float) else str)
            if scalar is str:
                params[k] = tuple(x.strip() for x in str(v).split(","))
        else:
            params[k] = v
    merged = {
        "seed": exp.get("seed"), "copies": exp.get("copies"), "jobs": exp.get("jobs"), "out": exp.get("out"),
        "selectors": tuple(x.strip() for x in str(exp["selectors"]).split(",")) if "selectors" in exp else None,
        "noise": parse_noise(exp["noise"]) if "noise" in exp else None,
    }
    for k, v in overrides.items():
        if v is not None:
            merged[k] = v
    merged = {k: v for k, v in merged.items() if v is not None}
    if kind is None:
        raise ConfigError("experiment kind not given")
    return ExperimentConfig(kind=kind, params=params, **merged)


def summarize(values):
    """Mean and sample standard deviation with compensated sums."""
    v = [float(x) for x in values if np.isfinite(x)]
    if not v:
        return float("nan"), float("nan")
    mean = math.fsum(v) / len(v)
    if len(v) < 2:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((x - mean) ** 2 for x in v) / (len(v) - 1))


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


# spectral benchmarks ---------------------------------------------------------

def _scaled(f, w):
    if isinstance(f, SvdFactors):
        return SvdFactors(U=f.U, V=f.V, sigma=w * f.sigma)
    return reweight_gsvd(f, w)


def _solve_copies(f, G, d_rows, w, m_exact, selectors, grid_count, theta, tol_rule="central"):
    """Select and solve for each copy; returns per-copy records and solutions."""
    chi2 = Chi2Config(theta=theta, tol_rule=tol_rule)
    recs, sols = [], {}
    grid = alpha_grid(f, grid_count)
    for c, d in enumerate(d_rows):
        s = spectral_coefficients(f, w * d)
        for meth in selectors:
            rec = {"copy": c, "method": meth}
            try:
                sel = select(meth, f, s, grid=grid, chi2=chi2)
                y = solve_spectral(f, s, sel.alpha).y
                rec.update(alpha=sel.alpha, error=relative_error(y, m_exact), status=sel.status,
                           selector_iters=sel.iterations, ok=1)
                sols[c, meth] = y
            except (Chi2RegError, ValueError, np.linalg.LinAlgError) as exc:
                rec.update(alpha=float("nan"), error=float("nan"), status=f"failed: {exc}", ok=0)
            recs.append(rec)
    return recs, sols


def _bench1d_task(task):
    n, depth, order, stride, levels, copies, seed, selectors, grid_count, theta, tol_rule, samples = task
    prob = gravity1d(n, z=depth, order=order)
    rows = np.arange(0, n, stride)
    G = prob.G[rows]
    f = compute_svd(G) if order == 0 else compute_gsvd(G, prob.L)
    out, keep = [], {}
    for eta in levels:
        noisy, wd = add_noise_uniform(prob.d_clean, eta, seed=seed, copies=copies)
        recs, sols = _solve_copies(_scaled(f, wd[0]), G, noisy[:, rows], wd[0], prob.m_exact,
                                   selectors, grid_count, theta, tol_rule)
        for r in recs:
            r.update(noise=eta, order=order, m=rows.size)
        out.extend(recs)
        for (c, meth), y in sols.items():
            if c < samples:
                keep[eta, order, int(rows.size), meth, c] = y
    return out, keep


def _aggregate(details, keys, value_cols):
    groups = {}
    for r in details:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        g = groups[key]
        ok = [r for r in g if r.get("ok", 1)]
        row = dict(zip(keys, key))
        for col in value_cols:
            row[f"mean_{col}"], row[f"std_{col}"] = summarize([r[col] for r in ok])
        row["n_ok"] = len(ok)
        row["n_failed"] = len(g) - len(ok)
        rows.append(row)
    return rows


def _stamp(rows, cfg):
    for r in rows:
        r["config_hash"] = cfg.hash
        r["seed"] = cfg.seed
    return rows


def run_bench_1d(cfg):
    """Selector benchmark on the 1-D gravity problem with stride downsampling."""
    t0 = time.perf_counter()
    p = cfg.params
    tasks = [(int(p["n"]), float(p["depth"]), int(o), int(s), tuple(float(e) for e in cfg.noise), cfg.copies,
              cfg.seed, cfg.selectors, int(p["grid_count"]), float(p["theta"]), str(p["tol_rule"]),
              int(p["samples"]))
             for o in p["orders"] for s in p["strides"]]
    results = _map(_bench1d_task, tasks, cfg.jobs)
    details, samples = [], {}
    for recs, keep in results:
        details.extend(recs)
        samples.update(keep)
    details.sort(key=lambda r: (r["noise"], r["order"], -r["m"], r["method"], r["copy"]))
    agg = _aggregate(details, ("noise", "order", "m", "method"), ("error", "alpha"))
    agg.sort(key=lambda r: (-r["noise"], r["order"], -r["m"], cfg.selectors.index(r["method"])))
    samples["exact"] = gravity1d(int(p["n"]), z=float(p["depth"])).m_exact
    failures = sum(r["n_failed"] for r in agg)
    return RunOutput(_stamp(agg, cfg), _stamp(details, cfg), samples, failures, time.perf_counter() - t0)


def _tomo_task(task):
    N, prefix, order, ray_seed, levels, copies, seed, selectors, grid_count, theta, tol_rule, samples = task
    prob = tomo(N, seed=ray_seed, order=order)
    G = prob.G[:prefix]
    f = compute_gsvd(G, prob.L)
    out, keep = [], {}
    for eta in levels:
        noisy, wd = add_noise_uniform(prob.d_clean, eta, seed=seed, copies=copies)
        recs, sols = _solve_copies(_scaled(f, wd[0]), G, noisy[:, :prefix], wd[0], prob.m_exact,
                                   selectors, grid_count, theta, tol_rule)
        for r in recs:
            r.update(noise=eta, m=prefix)
        out.extend(recs)
        for (c, meth), y in sols.items():
            if c < samples:
                keep[eta, prefix, meth, c] = y
    return out, keep


def run_bench_tomo(cfg):
    """Selector benchmark on random-ray tomography with prefix downsampling."""
    t0 = time.perf_counter()
    p = cfg.params
    tasks = [(int(p["N"]), int(m), int(p["order"]), int(p["ray_seed"]), tuple(float(e) for e in cfg.noise),
              cfg.copies, cfg.seed, cfg.selectors, int(p["grid_count"]), float(p["theta"]), str(p["tol_rule"]),
              int(p["samples"]))
             for m in p["prefixes"]]
    results = _map(_tomo_task, tasks, cfg.jobs)
    details, samples = [], {}
    for recs, keep in results:
        details.extend(recs)
        samples.update(keep)
    details.sort(key=lambda r: (r["noise"], -r["m"], r["method"], r["copy"]))
    agg = _aggregate(details, ("noise", "m", "method"), ("error", "alpha"))
    agg.sort(key=lambda r: (-r["noise"], -r["m"], cfg.selectors.index(r["method"])))
    samples["exact"] = tomo(int(p["N"]), m_rays=1, seed=int(p["ray_seed"])).m_exact
    samples["N"] = int(p["N"])
    failures = sum(r["n_failed"] for r in agg)
    return RunOutput(_stamp(agg, cfg), _stamp(details, cfg), samples, failures, time.perf_counter() - t0)


# MS inversion ------------------------------------------------------------------

VARIANTS = {
    "nonzero": {"init_mode": "regularized-m0"},
    "zero": {"init_mode": "zero"},
    # initial solve plus a single MS step
    "one-step": {"init_mode": "regularized-m0", "max_iters": 2},
}


def _ms_config(p, variant, method):
    opts = {"beta": float(p["beta"]), "epsilon": float(p["epsilon"]), "tau": float(p["tau"]),
            "max_iters": int(p["max_iters"]), "selector": method,
            "chi2": Chi2Config(theta=float(p["theta"]), tol_rule=str(p["tol_rule"])),
            "grid_count": int(p["grid_count"]), "stabilizer_ref": str(p["stabilizer_ref"])}
    opts.update(VARIANTS[variant])
    return MsConfig(**opts)


def _invert_task(task):
    variant, level, method, copies, seed, params, samples = task
    grid = survey_grid()
    prob = gravity2d_problem(grid)
    noisy, wd = add_noise_mixed(prob.d_clean, *level, seed=seed, copies=copies)
    cfg = _ms_config(params, variant, method)
    recs, hist, keep = [], [], {}
    for c in range(copies):
        p = prob.with_data(noisy[c])
        p.Wd = wd
        rec = {"variant": variant, "noise": f"{level[0]:g}:{level[1]:g}", "method": method, "copy": c}
        try:
            st = ms_invert(p, grid, cfg)
        except (Chi2RegError, ValueError, np.linalg.LinAlgError) as exc:
            rec.update(error=float("nan"), alpha=float("nan"), iterations=float("nan"),
                       stop_reason=f"failed: {exc}", ok=0)
            recs.append(rec)
            continue
        rec.update(error=relative_error(st.m_k, prob.m_exact), alpha=st.alpha_k, iterations=st.k,
                   stop_reason=st.stop_reason, ok=1)
        recs.append(rec)
        for h in st.history:
            hist.append({**{k: rec[k] for k in ("variant", "noise", "method", "copy")},
                         "k": h["k"], "alpha": h["alpha"], "P": h["P"], "rel_change": h["rel_change"],
                         "status": h["status"], "stop_reason": st.stop_reason})
        if c in samples:
            keep[variant, rec["noise"], method, c] = (st.m_k, st.m_init)
    return recs, hist, keep


def run_invert_2d(cfg):
    """MS focusing inversions of the 2-D gravity model over noise copies."""
    t0 = time.perf_counter()
    p = cfg.params
    levels = [tuple(float(x) for x in lv) for lv in cfg.noise]
    samples_idx = tuple(int(x) for x in _tuple_of(p["samples"], int))
    tasks = [(v, lv, meth, cfg.copies, cfg.seed, p, samples_idx)
             for v in p["variants"] for lv in levels for meth in cfg.selectors]
    results = _map(_invert_task, tasks, cfg.jobs)
    details, history, samples = [], [], {}
    for recs, hist, keep in results:
        details.extend(recs)
        history.extend(hist)
        samples.update(keep)
    agg = _aggregate(details, ("variant", "noise", "method"), ("error", "alpha", "iterations"))
    order = {v: i for i, v in enumerate(p["variants"])}
    lv_order = {f"{a:g}:{b:g}": i for i, (a, b) in enumerate(levels)}
    agg.sort(key=lambda r: (order[r["variant"]], lv_order[r["noise"]], cfg.selectors.index(r["method"])))
    grid = survey_grid()
    prob = gravity2d_problem(grid)
    samples["exact"] = prob.m_exact
    samples["d_clean"] = prob.d_clean
    samples["grid"] = grid
    out = RunOutput(_stamp(agg, cfg), _stamp(details, cfg), samples,
                    sum(r["n_failed"] for r in agg), time.perf_counter() - t0)
    out.samples["history"] = _stamp(history, cfg)
    return out


# self-test ---------------------------------------------------------------------

def run_selftest(cfg=None, check_prism_rows=2):
    """Quick versions of the property suite; each row has a measured value and a bound."""
    from scipy import integrate

    from .problems import derivative_operator, gravity2d_forward
    from .tikhonov import ProblemInstance, solve_direct

    t0 = time.perf_counter()
    rng = np.random.default_rng(12345)
    rows = []

    def report(name, value, bound):
        rows.append({"check": name, "value": float(value), "bound": float(bound), "pass": int(value <= bound)})

    worst_rec = worst_unit = 0.0
    for _ in range(20):
        m = int(rng.integers(3, 20))
        n = int(rng.integers(m + 1, m + 15))
        p = int(rng.integers(max(n - m, 1), n + 1))
        Gt, Lt = rng.standard_normal((m, n)), rng.standard_normal((p, n))
        f = compute_gsvd(Gt, Lt)
        Gr, Lr = f.reconstruct()
        worst_rec = max(worst_rec, np.linalg.norm(Gr - Gt) / np.linalg.norm(Gt),
                        np.linalg.norm(Lr - Lt) / np.linalg.norm(Lt))
        worst_unit = max(worst_unit, np.max(np.abs(f.nu ** 2 + f.mu ** 2 - 1)))
    report("gsvd reconstruction (relative)", worst_rec, 1e-10)
    report("gsvd nu^2 + mu^2 = 1", worst_unit, 1e-12)

    worst = 0.0
    for _ in range(20):
        m, n = 15, 25
        G = rng.standard_normal((m, n))
        L = derivative_operator(n, 1)
        prob = ProblemInstance(G=G, d_obs=rng.standard_normal(m), Wd=rng.uniform(0.5, 2, m), L=L)
        f = compute_gsvd(prob.Gt, L)
        s = spectral_coefficients(f, prob.rt())
        a = float(10 ** rng.uniform(-1, 1))
        y1 = solve_spectral(f, s, a).y
        y2 = solve_direct(prob, a).y
        worst = max(worst, np.linalg.norm(y1 - y2) / np.linalg.norm(y2))
    report("spectral vs direct solve (relative)", worst, 1e-8)

    m, n = 40, 60
    G = rng.standard_normal((m, n))
    f = compute_svd(G)
    sigL = 0.7
    vals = []
    for _ in range(300):
        x = sigL * rng.standard_normal(n)
        d = G @ x + rng.standard_normal(m)
        s = spectral_coefficients(f, d)
        vals.append(float(np.sum(s.band ** 2 / (f.gamma_band ** 2 * sigL ** 2 + 1))))
    report("chi2 Monte Carlo |mean - dof|", abs(np.mean(vals) - m), 3 * math.sqrt(2 * m) / math.sqrt(300))

    grid = survey_grid()
    G = gravity2d_forward(grid)
    worst = 0.0
    from .problems import GCC_TO_KGM3, GRAV_CONST, SI_TO_MGAL
    for i in range(check_prism_rows):
        for j in range(0, grid.n, 25):
            xs = grid.stations[i * 17 % grid.m]
            col, row = j % grid.n_cols, j // grid.n_cols
            x1, z1 = col * grid.cell_width - xs, row * grid.cell_height
            x2, z2 = x1 + grid.cell_width, z1 + grid.cell_height
            pts = [0.0] if x1 < 0 < x2 else None
            val = integrate.dblquad(lambda z, x: z / (x * x + z * z), x1, x2, z1, z2, epsabs=0, epsrel=1e-12)[0] \
                if pts is None else sum(integrate.dblquad(lambda z, x: z / (x * x + z * z), a, b, z1, z2,
                                                          epsabs=0, epsrel=1e-12)[0] for a, b in ((x1, 0.0), (0.0, x2)))
            ref = 2 * GRAV_CONST * GCC_TO_KGM3 * SI_TO_MGAL * val
            worst = max(worst, abs(G[i * 17 % grid.m, j] - ref) / abs(ref))
    report("prism closed form vs quadrature (relative)", worst, 1e-8)
    agg = rows
    return RunOutput(agg, [], {}, sum(1 - r["pass"] for r in rows), time.perf_counter() - t0)


RUNNERS = {"bench-1d": run_bench_1d, "bench-tomo": run_bench_tomo, "invert-2d": run_invert_2d,
           "selftest": run_selftest}


def run_experiment(cfg):
    return RUNNERS[cfg.kind](cfg)
