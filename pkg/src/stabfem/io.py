"""Legacy ASCII VTK and CSV writers.

Floating-point values are written with 17 significant digits so that a
parsed value round-trips to the same double.
"""
from __future__ import annotations

import csv
import os

import numpy as np

from .errors import InvalidArgumentError

VTK_LINE = 3
VTK_QUAD = 9


def fmt(value):
    """17-significant-digit text of a float (ints pass through)."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def write_vtk(mesh, fields, path, title="stabfem solution"):
    """Write nodal scalar fields on ``mesh`` as a legacy unstructured grid.

    Parameters
    ----------
    mesh : Mesh
        Line or quad mesh. 1D points get zero y and z coordinates.
    fields : dict of str -> array (n_nodes,)
        One SCALARS block per entry, in insertion order.
    path : str or path-like
    """
    fields = {name: np.asarray(v, dtype=float).ravel() for name, v in fields.items()}
    for name, v in fields.items():
        if len(v) != mesh.n_nodes:
            raise InvalidArgumentError(
                f"field {name!r} has {len(v)} values for {mesh.n_nodes} nodes"
            )
        if any(c.isspace() for c in name):
            raise InvalidArgumentError(f"field name {name!r} contains whitespace")
    pts = np.zeros((mesh.n_nodes, 3))
    pts[:, : mesh.dim] = mesh.nodes
    cells = mesh.elements
    ctype = VTK_LINE if mesh.dim == 1 else VTK_QUAD
    nen = cells.shape[1]

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [" ".join(fmt(c) for c in p) for p in pts]
    lines.append(f"CELLS {len(cells)} {len(cells) * (nen + 1)}")
    lines += [f"{nen} " + " ".join(str(int(i)) for i in c) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(ctype)] * len(cells)
    if fields:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, v in fields.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [fmt(x) for x in v]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_point_data(path):
    """Parse the POINTS and SCALARS blocks written by :func:`write_vtk`.

    Returns ``(points (n, 3), {name: values})``; meant for round-trip checks.
    """
    with open(path) as fh:
        tokens = fh.read().split("\n")
    out = {}
    points = None
    i = 0
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            points = np.array([[float(t) for t in tokens[i + 1 + k].split()] for k in range(n)])
            i += n
        elif line.startswith("POINT_DATA"):
            n = int(line.split()[1])
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            # skip LOOKUP_TABLE line
            out[name] = np.array([float(tokens[i + 2 + k]) for k in range(n)])
            i += n + 1
        i += 1
    return points, out


def write_csv(path, header, rows):
    """Comma-separated file with a header row and 17-digit floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_nodal_csv(mesh, phi, g, path):
    """1D solution file with columns ``x, phi`` and ``g`` for two-field schemes."""
    x = mesh.nodes[:, 0]
    header = ["x", "phi"]
    cols = [x, np.asarray(phi, dtype=float)]
    if g is not None:
        header.append("g")
        cols.append(np.asarray(g, dtype=float).reshape(mesh.n_nodes, -1)[:, 0])
    write_csv(path, header, zip(*cols))


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
