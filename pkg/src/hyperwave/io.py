"""CSV and JSON artifacts.  Every row and report carries the hash of the config behind it."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError, HyperwaveError
from .grid import Grid, MapField

HASH_COLUMN = "config_hash"


def _num(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return repr(x) if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer, int, np.bool_, bool)):
        return str(int(x))
    return str(x)


def write_csv(path, header, rows, chash: str):
    """Write ``header`` plus ``rows`` with a trailing ``config_hash`` column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header) + [HASH_COLUMN])
        for r in rows:
            w.writerow([_num(v) for v in r] + [chash])
    return path


def read_csv(path):
    """``(header, float array, set of hashes)``; the hash column is split off."""
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = list(rd)
    if not header or header[-1] != HASH_COLUMN:
        raise HyperwaveError(f"{path}: missing {HASH_COLUMN} column")
    hashes = {r[-1] for r in rows}
    data = np.array([[float(v) for v in r[:-1]] for r in rows]) if rows else \
        np.zeros((0, len(header) - 1))
    return header[:-1], data, hashes


def grid_sidecar(grid: Grid) -> dict:
    return {"x1_min": grid.x1_min, "x1_max": grid.x1_max, "x2_min": grid.x2_min,
            "x2_max": grid.x2_max, "n1": grid.n1, "n2": grid.n2}


def grid_from_sidecar(d) -> Grid:
    return Grid(float(d["x1_min"]), float(d["x1_max"]), float(d["x2_min"]),
                float(d["x2_max"]), int(d["n1"]), int(d["n2"]))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, obj, chash: str | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = _jsonable(obj)
    if chash is not None:
        d = {HASH_COLUMN: chash, **d}
    path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _sidecar_path(path):
    return Path(path).with_suffix(".json")


def write_fields(path, grid: Grid, fields: dict, chash: str, sidecar=True):
    """Node table ``x1, x2, <fields...>`` in row-major order (``x1`` fastest)."""
    names = list(fields)
    cols = [grid.X1.ravel(), grid.X2.ravel()] + [np.asarray(fields[n]).ravel() for n in names]
    write_csv(path, ["x1", "x2"] + names, zip(*cols), chash)
    if sidecar:
        write_json(_sidecar_path(path), {"grid": grid_sidecar(grid), "fields": names}, chash)
    return Path(path)


def write_map_field(path, u: MapField, chash: str):
    return write_fields(path, u.grid, {"u1": u.u1, "u2": u.u2}, chash)


def read_map_field(path) -> MapField:
    side = json.loads(_sidecar_path(path).read_text(encoding="utf-8"))
    g = grid_from_sidecar(side["grid"])
    header, data, _ = read_csv(path)
    if data.shape[0] != g.size:
        raise HyperwaveError(f"{path}: {data.shape[0]} rows for a grid of {g.size} nodes")
    col = {n: i for i, n in enumerate(header)}
    return MapField(g, data[:, col["u1"]].reshape(g.shape), data[:, col["u2"]].reshape(g.shape))


def write_heat_diagnostics(path, traj, chash):
    return write_csv(path, ["s", "energy", "l2_dsu", "sup_dsu"], traj.diagnostics, chash)


def write_wave_series(path, run, chash):
    return write_csv(path, ["t", "energy", "sup_dist", "l2_dist"], run.series, chash)


_GAUGE_FIELDS = ("phi_1", "phi_2", "phi_s", "phi_t", "a_1", "a_2", "a_t", "wave_tension")


def write_gauge_bundle(directory, traj, chash, s_values=None):
    """One CSV per gauge field with one column per (component, s); shared grid sidecar."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = traj.grid
    idx = range(len(traj.snapshots)) if s_values is None else [traj.index(s) for s in s_values]
    written = []
    for name in _GAUGE_FIELDS:
        cols = {}
        for i in idx:
            sn = traj.snapshots[i]
            f = getattr(sn, name)
            if f is None:
                continue
            tag = f"s={sn.s:.6g}"
            if np.ndim(f) == 3:
                cols[f"{name}^1 {tag}"] = f[0]
                cols[f"{name}^2 {tag}"] = f[1]
            else:
                cols[f"{name} {tag}"] = f
        if cols:
            written.append(write_fields(d / f"{name}.csv", g, cols, chash, sidecar=False))
    write_json(d / "grid.json", {"grid": grid_sidecar(g), "t": traj.t,
                                 "fields": [p.stem for p in written]}, chash)
    return written


def audit_directory(directory, expected: str | None = None):
    """Check that every CSV/JSON artifact under ``directory`` carries one consistent hash.

    Returns ``(ok, details)`` where ``details`` maps relative paths to the hashes
    found (or an error string).
    """
    root = Path(directory)
    if not root.is_dir():
        raise ConfigError(f"no such output directory: {root}")
    details = {}
    found = set()
    for p in sorted(root.rglob("*")):
        rel = str(p.relative_to(root))
        if p.suffix == ".csv":
            try:
                _, _, hs = read_csv(p)
            except (HyperwaveError, ValueError, StopIteration) as exc:
                details[rel] = f"error: {exc}"
                continue
            details[rel] = sorted(hs)
            found |= hs
        elif p.suffix == ".json":
            try:
                d = json.loads(p.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                details[rel] = f"error: {exc}"
                continue
            h = d.get(HASH_COLUMN) if isinstance(d, dict) else None
            details[rel] = [h] if h else "error: no config_hash"
            if h:
                found.add(h)
    bad = [k for k, v in details.items() if isinstance(v, str)]
    ok = not bad and len(found) <= 1 and bool(details)
    if expected is not None:
        ok = ok and found == {expected}
    return ok, details
