"""Serialization of fields, meshes, and reports.

Node tables are comma-separated text with a fixed header and one row per
node in theta-major order; floats carry 17 significant digits so a
re-read reproduces the in-memory values bit for bit.  Meshes use the
plain-text polygon format (`v x y z` vertices, `f ...` faces) with the
Euclidean visualization embedding x = rho * z for every ambient
curvature; reports are flat `key = value` text.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import GeometryState
from .grid import ScalarField, SphereGrid

NODE_TABLE_HEADER = "theta,phi,rho,kappa1,kappa2,u,residual"


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_node_table(path, state: GeometryState, residual_values: np.ndarray) -> None:
    g = state.grid
    tt, pp = g.mesh()
    cols = (tt, pp, state.rho, state.kappa1, state.kappa2, state.u, residual_values)
    flat = [np.asarray(c, dtype=float).ravel() for c in cols]
    lines = [NODE_TABLE_HEADER]
    for row in zip(*flat):
        lines.append(",".join(format(v, ".17g") for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_node_table(path) -> dict:
    """Columns of a node table as float arrays, keyed by header name."""
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0].strip() != NODE_TABLE_HEADER:
        raise ValueError(f"{path}: not a node table (bad header)")
    names = NODE_TABLE_HEADER.split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    if data.ndim != 2 or data.shape[1] != len(names):
        raise ValueError(f"{path}: malformed node table")
    return {name: data[:, idx] for idx, name in enumerate(names)}


def field_from_node_table(path, grid: SphereGrid) -> ScalarField:
    cols = read_node_table(path)
    rho = cols["rho"]
    if rho.size != grid.n_nodes:
        raise ValueError(
            f"{path}: node table has {rho.size} rows, grid expects {grid.n_nodes}")
    return ScalarField(grid, rho.reshape(grid.shape))


def write_mesh(path, grid: SphereGrid, rho: np.ndarray) -> None:
    """Quad-dominant mesh of the graph with triangulated polar caps.

    Vertices are the Euclidean chart embedding x = rho * z (a
    visualization of the radial graph; not an isometric embedding when
    the ambient curvature is nonzero).  Pole vertices take the mean
    radius of the adjacent ring.
    """
    nt, nphi = grid.shape
    z, _, _ = grid.unit_vectors()
    pts = rho[..., None] * z
    lines = []
    for i in range(nt):
        for j in range(nphi):
            x, y, w = pts[i, j]
            lines.append(f"v {format(x, '.17g')} {format(y, '.17g')} {format(w, '.17g')}")
    north = float(np.mean(rho[0]))
    south = float(np.mean(rho[-1]))
    lines.append(f"v 0 0 {format(north, '.17g')}")
    lines.append(f"v 0 0 {format(-south, '.17g')}")
    vid = lambda i, j: i * nphi + (j % nphi) + 1
    north_id = nt * nphi + 1
    south_id = nt * nphi + 2
    for i in range(nt - 1):
        for j in range(nphi):
            lines.append(f"f {vid(i, j)} {vid(i + 1, j)} {vid(i + 1, j + 1)} {vid(i, j + 1)}")
    for j in range(nphi):
        lines.append(f"f {north_id} {vid(0, j)} {vid(0, j + 1)}")
        lines.append(f"f {south_id} {vid(nt - 1, j + 1)} {vid(nt - 1, j)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_report(path, mapping: dict) -> None:
    lines = [f"{key} = {_fmt(value)}" for key, value in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path) -> dict:
    """Flat report text back as a str -> str mapping."""
    out = {}
    for line in Path(path).read_text().splitlines():
        body = line.strip()
        if not body or "=" not in body:
            continue
        key, value = (part.strip() for part in body.split("=", 1))
        out[key] = value
    return out
