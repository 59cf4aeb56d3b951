"""Command-line entry point.

Precedence for every setting: command-line flag, then the config file, then
the built-in defaults of the experiment kind.  ``CHI2REG_OUT`` only sets the
default output directory.

Exit status: 0 on success, 2 when some noise copies failed (they are counted
in the tables), 1 on a fatal error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import io
from .errors import Chi2RegError, ConfigError
from .harness import build_config, parse_noise, run_experiment
from .plotting import emit_plotdata, render_directory

log = logging.getLogger("chi2reg")

OUT_ENV = "CHI2REG_OUT"

TABLES = {
    "bench-1d": "bench1d",
    "bench-tomo": "tomo",
    "invert-2d": "invert2d",
    "selftest": "selftest",
}


def _common(p):
    p.add_argument("--config", type=Path, help="INI file with [experiment] and [params] sections")
    p.add_argument("--seed", type=int)
    p.add_argument("--selector", help="comma-separated selectors (chi2, upre, gcv, mdp, lcurve)")
    p.add_argument("--noise", help="noise levels, e.g. 0.1,0.01 or 0.01:0.001,0.05:0.01")
    p.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./results/<kind>)")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--copies", type=int, help="noise copies per setting")
    p.add_argument("--no-plots", action="store_true", help="skip figure data and PNGs")


def build_parser():
    parser = argparse.ArgumentParser(prog="chi2reg", description="Regularization-parameter experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("bench-1d", "bench-tomo", "invert-2d", "selftest"):
        _common(sub.add_parser(name, help=f"run the {name} experiment"))
    g = sub.add_parser("gen", help="write a problem bundle")
    g.add_argument("problem", choices=("gravity1d", "tomo", "gravity2d"))
    _common(g)
    pd = sub.add_parser("plotdata", help="render PNGs for the plot CSVs in a directory")
    _common(pd)
    return parser


def _out_dir(args, default_name, cfg_out=None):
    if args.out is not None:
        return args.out
    if cfg_out:
        return Path(cfg_out)
    base = os.environ.get(OUT_ENV)
    return Path(base) / default_name if base else Path("results") / default_name


def _file_cfg(args):
    return io.read_config(args.config) if args.config else {}


def _write_outputs(cfg, output, out):
    stem = TABLES[cfg.kind]
    paths = [io.write_table(out / f"table_{stem}.csv", output.aggregate)]
    if output.details:
        paths.append(io.write_table(out / f"copies_{stem}.csv", output.details))
    if "history" in output.samples:
        paths.append(io.write_table(out / f"history_{stem}.csv", output.samples["history"]))
    return paths


def cmd_experiment(args):
    fc = _file_cfg(args)
    cfg = build_config(
        args.command, fc, seed=args.seed, jobs=args.jobs, copies=args.copies,
        selectors=tuple(s.strip() for s in args.selector.split(",")) if args.selector else None,
        noise=parse_noise(args.noise) if args.noise else None,
    )
    out = _out_dir(args, args.command, cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    output = run_experiment(cfg)
    _write_outputs(cfg, output, out)
    if not args.no_plots:
        emit_plotdata(cfg.kind, output, out, cfg)
    for row in output.aggregate if cfg.kind == "selftest" else ():
        print(f"{'PASS' if row['pass'] else 'FAIL'}  {row['check']}: {row['value']:.3g} (bound {row['bound']:.3g})")
    log.info("%s: %d rows, %d failed copies, %.1fs -> %s", cfg.kind, len(output.aggregate), output.failures,
             output.elapsed, out)
    return 2 if output.failures else 0


def cmd_gen(args):
    from .problems import add_noise_mixed, add_noise_uniform, gravity1d, gravity2d_problem, tomo

    params = _file_cfg(args).get("params", {})
    seed = 0 if args.seed is None else args.seed
    copies = args.copies or 1
    if args.problem == "gravity1d":
        prob = gravity1d(int(params.get("n", 3200)), z=float(params.get("depth", 0.75)),
                         order=int(params.get("order", 0)))
        noise = parse_noise(args.noise) if args.noise else (0.1,)
    elif args.problem == "tomo":
        prob = tomo(int(params.get("N", 60)), seed=int(params.get("ray_seed", 0)), order=int(params.get("order", 1)))
        noise = parse_noise(args.noise) if args.noise else (0.02,)
    else:
        prob = gravity2d_problem()
        noise = parse_noise(args.noise) if args.noise else ((0.01, 0.001),)
    level = noise[0]
    if isinstance(level, tuple):
        noisy, wd = add_noise_mixed(prob.d_clean, *level, seed=seed, copies=copies)
        spec = {"noise_kind": "mixed", "noise_levels": level}
    else:
        noisy, wd = add_noise_uniform(prob.d_clean, level, seed=seed, copies=copies)
        spec = {"noise_kind": "uniform-max", "noise_levels": (level,)}
    prob.Wd = wd
    out = _out_dir(args, f"bundle_{args.problem}")
    io.save_bundle(out, prob, noisy, {"kind": args.problem, "seed": seed, **spec})
    log.info("wrote %s bundle (%d copies) -> %s", args.problem, copies, out)
    return 0


def cmd_plotdata(args):
    out = _out_dir(args, "")
    if not any(out.glob("*.csv")):
        from .problems import gravity2d_problem, survey_grid

        grid = survey_grid()
        prob = gravity2d_problem(grid)
        out.mkdir(parents=True, exist_ok=True)
        io.write_grid(out / "grid_model2d_exact.csv", grid.as_image(prob.m_exact))
        io.write_table(out / "curve_anomaly2d.csv",
                       [{"x_m": x, "gz_mgal": g} for x, g in zip(grid.stations, prob.d_clean)])
    pngs = render_directory(out)
    log.info("rendered %d figures in %s", len(pngs), out)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "plotdata":
            return cmd_plotdata(args)
        return cmd_experiment(args)
    except (Chi2RegError, ConfigError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
