"""Plot-ready CSV emission and PNG rendering.

File name prefixes pick the renderer: ``curve_*`` (first column against the
rest), ``grid_*`` (heat map of a cell grid) and ``xy_*`` (one parametric
curve).  The PNGs are written next to their CSVs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import io

__all__ = ["emit_plotdata", "render_directory", "render_file"]

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "image.cmap": "viridis",
}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update(STYLE)
    return plt


def _columns(path):
    rows = io.read_table(path)
    if not rows:
        return [], {}
    names = list(rows[0])
    return names, {k: np.array([float(r[k]) for r in rows]) for k in names}


def _curve(plt, path, out):
    names, cols = _columns(path)
    fig, ax = plt.subplots()
    x = cols[names[0]]
    for k in names[1:]:
        style = {"color": "k", "lw": 0.8} if k == "exact" else {"lw": 1.2}
        ax.plot(x, cols[k], label=k, **style)
    ax.set_xlabel(names[0])
    if len(names) > 2:
        ax.legend()
    ax.set_title(path.stem.removeprefix("curve_"))
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def _grid(plt, path, out):
    names, cols = _columns(path)
    img = np.column_stack([cols[k] for k in names])
    fig, ax = plt.subplots(figsize=(6.0, max(1.2, 6.0 * img.shape[0] / img.shape[1] + 0.8)))
    im = ax.imshow(img, aspect="equal", interpolation="nearest")
    ax.grid(False)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title(path.stem.removeprefix("grid_"))
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def _xy(plt, path, out):
    names, cols = _columns(path)
    fig, ax = plt.subplots()
    ax.plot(cols[names[1]], cols[names[2]], lw=1.2)
    ax.set_xlabel(names[1])
    ax.set_ylabel(names[2])
    ax.set_title(path.stem.removeprefix("xy_"))
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


RENDERERS = {"curve_": _curve, "grid_": _grid, "xy_": _xy}


def render_file(path):
    path = Path(path)
    for prefix, fn in RENDERERS.items():
        if path.name.startswith(prefix):
            out = path.with_suffix(".png")
            fn(_pyplot(), path, out)
            return out
    return None


def render_directory(directory):
    """Render every plot CSV in ``directory``; returns the PNG paths."""
    return [p for p in (render_file(f) for f in sorted(Path(directory).glob("*.csv"))) if p is not None]


# emission ----------------------------------------------------------------------

def _emit_bench1d(samples, d):
    exact = samples["exact"]
    t = (np.arange(exact.size) + 0.5) / exact.size
    groups = {}
    for key, y in samples.items():
        if isinstance(key, tuple) and key[-1] == 0:
            eta, order, m, meth, _ = key
            groups.setdefault((eta, order, m), {})[meth] = y
    paths = []
    for (eta, order, m), sols in sorted(groups.items()):
        cols = {"t": t, "exact": exact, **sols}
        rows = [dict(zip(cols, vals)) for vals in zip(*cols.values())]
        paths.append(io.write_table(d / f"curve_gravity1d_eta{eta:g}_order{order}_m{m}.csv", rows, list(cols)))
    return paths


def _emit_tomo(samples, d):
    N = samples["N"]
    paths = [io.write_grid(d / "grid_tomo_exact.csv", samples["exact"].reshape(N, N))]
    for key, y in sorted((k, v) for k, v in samples.items() if isinstance(k, tuple)):
        eta, m, meth, c = key
        if c == 0:
            paths.append(io.write_grid(d / f"grid_tomo_eta{eta:g}_m{m}_{meth}.csv", y.reshape(N, N)))
    return paths


def _emit_invert2d(samples, d, cfg):
    from .linalg import compute_svd, spectral_coefficients
    from .msfocus import MsConfig, ms_initialize, ms_operator
    from .problems import add_noise_mixed, gravity2d_problem
    from .regparam import alpha_grid, lcurve_points, significant_count
    from .tikhonov import chi2_functional

    grid = samples["grid"]
    paths = [io.write_grid(d / "grid_model2d_exact.csv", grid.as_image(samples["exact"]))]
    paths.append(io.write_table(d / "curve_anomaly2d.csv",
                                [{"x_m": x, "gz_mgal": g} for x, g in zip(grid.stations, samples["d_clean"])]))
    for key, val in sorted((k, v) for k, v in samples.items() if isinstance(k, tuple)):
        variant, noise, meth, c = key
        m_final, m_init = val
        tag = f"{variant}_{noise.replace(':', '-')}_{meth}_c{c}"
        paths.append(io.write_grid(d / f"grid_model2d_{tag}.csv", grid.as_image(m_final)))
        if meth == cfg.selectors[0]:
            paths.append(io.write_grid(d / f"grid_init2d_{variant}_{noise.replace(':', '-')}_c{c}.csv",
                                       grid.as_image(m_init)))
    # L-curve and chi2 root trace for the first MS step of copy 0, lowest noise level
    prob = gravity2d_problem(grid)
    level = tuple(float(x) for x in cfg.noise[0])
    noisy, wd = add_noise_mixed(prob.d_clean, *level, seed=cfg.seed, copies=1)
    p = prob.with_data(noisy[0])
    p.Wd = wd
    mcfg = MsConfig(stabilizer_ref=str(cfg.params.get("stabilizer_ref", "zero")))
    st = ms_initialize(p, grid, mcfg)
    D = st.wdepth * ms_operator(st.m_k, np.zeros_like(st.m_k), mcfg.epsilon)
    f = compute_svd(p.Gt / D)
    s = spectral_coefficients(f, p.weight(p.d_obs - p.G @ st.m_k))
    ag = alpha_grid(f, int(cfg.params.get("grid_count", 1000)))
    x, y = lcurve_points(f, s, ag)
    paths.append(io.write_table(d / "xy_lcurve_2d.csv",
                                [{"alpha": a, "log_residual": u, "log_seminorm": v} for a, u, v in zip(ag, x, y)]))
    dof = min(f.m, significant_count(f, np.sqrt(np.finfo(float).eps)))
    sig = 1.0 / ag[::-1]
    val, _ = chi2_functional(f, s, sig)
    paths.append(io.write_table(d / "xy_chi2_trace_2d.csv",
                                [{"alpha": 1.0 / a, "sigma_L": a, "chi2_minus_dof": v - dof} for a, v in zip(sig, val)]))
    return paths


def emit_plotdata(kind, output, out_dir, cfg=None, render=True):
    """Write per-figure CSVs for a finished run (and their PNGs)."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    if kind == "bench-1d":
        paths = _emit_bench1d(output.samples, d)
    elif kind == "bench-tomo":
        paths = _emit_tomo(output.samples, d)
    elif kind == "invert-2d":
        paths = _emit_invert2d(output.samples, d, cfg)
    else:
        paths = []
    if render:
        for pth in paths:
            render_file(pth)
    return paths
