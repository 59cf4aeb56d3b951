"""File formats: delimited tables, problem bundles and experiment configs.

Floats are written with at most 9 significant digits so repeated runs give
byte-identical files.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import scipy.io

from .errors import ConfigError
from .tikhonov import ProblemInstance

__all__ = [
    "format_value",
    "write_table",
    "read_table",
    "write_vector",
    "read_vector",
    "write_grid",
    "write_meta",
    "read_meta",
    "save_bundle",
    "load_bundle",
    "read_config",
    "config_hash",
]


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v != v:
            return "nan"
        if v in (float("inf"), float("-inf")):
            return "inf" if v > 0 else "-inf"
        out = f"{v:.9g}"
        return "0" if out == "-0" else out
    return "" if v is None else str(v)


def write_table(path, rows, columns=None):
    """Write a list of dicts as a headered CSV; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(r.get(c)) for c in columns])
    return path


def _parse(v):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def read_table(path):
    with Path(path).open(newline="") as fh:
        return [{k: _parse(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def write_vector(path, v, name="value"):
    return write_table(path, [{name: x} for x in np.asarray(v, dtype=float).ravel()], [name])


def read_vector(path):
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        return np.array([float(r[0]) for r in rd])


def write_grid(path, img):
    """Matrix-shaped CSV (one grid row per line, ``c0..`` header)."""
    img = np.atleast_2d(img)
    cols = [f"c{j}" for j in range(img.shape[1])]
    return write_table(path, [dict(zip(cols, row)) for row in img], cols)


def write_meta(path, meta):
    path = Path(path)
    lines = [f"{k} = {format_value(v) if not isinstance(v, (tuple, list)) else ','.join(map(format_value, v))}"
             for k, v in sorted(meta.items())]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_meta(path):
    meta = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, _, val = line.partition("=")
        val = val.strip()
        meta[key.strip()] = [_parse(x) for x in val.split(",")] if "," in val else _parse(val)
    return meta


def save_bundle(directory, problem, noisy=None, meta=None):
    """Write ``G.mtx``, ``m_exact.csv``, ``d_clean.csv``, ``d_noisy_<c>.csv``, ``wd.csv`` and ``meta``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(d / "G.mtx"), problem.G, precision=17)
    if problem.m_exact is not None:
        write_vector(d / "m_exact.csv", problem.m_exact)
    if problem.d_clean is not None:
        write_vector(d / "d_clean.csv", problem.d_clean)
    wd = problem.Wd if problem.Wd.ndim == 1 else np.diag(problem.Wd)
    write_vector(d / "wd.csv", wd)
    noisy = np.empty((0, problem.G.shape[0])) if noisy is None else np.atleast_2d(noisy)
    for c, row in enumerate(noisy):
        write_vector(d / f"d_noisy_{c}.csv", row)
    info = dict(problem.meta)
    info.update(meta or {})
    info.setdefault("dims", (problem.G.shape[0], problem.G.shape[1]))
    info["copies"] = noisy.shape[0]
    write_meta(d / "meta", info)
    return d


def load_bundle(directory):
    """Inverse of :func:`save_bundle`; returns ``(ProblemInstance, noisy copies, meta)``.

    The regularizer is not stored, so ``L`` is the identity.
    """
    d = Path(directory)
    G = scipy.io.mmread(str(d / "G.mtx"))
    G = G.toarray() if hasattr(G, "toarray") else np.asarray(G)
    meta = read_meta(d / "meta")
    wd = read_vector(d / "wd.csv")
    m_exact = read_vector(d / "m_exact.csv") if (d / "m_exact.csv").exists() else None
    d_clean = read_vector(d / "d_clean.csv") if (d / "d_clean.csv").exists() else None
    copies = int(meta.get("copies", 0))
    noisy = np.array([read_vector(d / f"d_noisy_{c}.csv") for c in range(copies)]).reshape(copies, G.shape[0])
    d_obs = noisy[0] if copies else (d_clean if d_clean is not None else np.zeros(G.shape[0]))
    prob = ProblemInstance(G=G, d_obs=d_obs, Wd=wd, L=np.eye(G.shape[1]), m_exact=m_exact,
                           d_clean=d_clean, meta=meta)
    return prob, noisy, meta


def read_config(path):
    """Read an INI config into ``{"experiment": {...}, "params": {...}}`` with parsed scalars."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if "experiment" not in cp:
        raise ConfigError("config needs an [experiment] section")
    out = {}
    for name in cp.sections():
        out[name] = {k: _parse(v.strip()) for k, v in cp[name].items()}
    return out


def config_hash(cfg):
    """Short stable hash of a JSON-able config mapping."""
    blob = json.dumps(cfg, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
