"""Legacy ASCII VTK POLYDATA emission and CSV convergence tables.

Floats are written with 17 significant digits so files round-trip doubles
bitwise; both formats come with readers used by the round-trip tests.
"""

import csv
import io

import numpy as np

from .errors import ConfigurationError


def _fmt(x):
    return format(float(x), ".17g")


def write_vtk(snap, values, path, title="moverfv surface field"):
    """Write a snapshot (and optional per-cell scalars) as legacy VTK POLYDATA.

    ``values`` of None emits geometry only; otherwise one CELL_DATA scalar
    per triangle, in cell order.
    """
    tri = snap.mesh.triangles
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {len(snap.vertices)} double",
    ]
    lines += [" ".join(_fmt(c) for c in p) for p in snap.vertices]
    lines.append(f"POLYGONS {len(tri)} {4 * len(tri)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tri]
    if values is not None:
        values = np.asarray(values, dtype=float)
        if values.shape != (len(tri),):
            raise ConfigurationError("cell data length must match the triangle count")
        lines.append(f"CELL_DATA {len(tri)}")
        lines.append("SCALARS u double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [_fmt(v) for v in values]
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines))
            fh.write("\n")
    except OSError as err:
        raise OSError(f"cannot write VTK file {path}: {err}") from err


def read_vtk(path):
    """Read back a file written by write_vtk: (points, triangles, values|None)."""
    with open(path, "r", encoding="ascii") as fh:
        tokens = fh.read().split("\n")
    idx = 0

    def expect(prefix):
        nonlocal idx
        line = tokens[idx]
        if not line.startswith(prefix):
            raise ValueError(f"{path}: expected '{prefix}', found '{line}'")
        idx += 1
        return line

    expect("# vtk DataFile Version")
    idx += 1  # title
    expect("ASCII")
    expect("DATASET POLYDATA")
    n_points = int(expect("POINTS").split()[1])
    points = np.array([[float(v) for v in tokens[idx + i].split()] for i in range(n_points)])
    idx += n_points
    n_polys = int(expect("POLYGONS").split()[1])
    tris = np.array(
        [[int(v) for v in tokens[idx + i].split()[1:]] for i in range(n_polys)], dtype=np.int64
    )
    idx += n_polys
    values = None
    if idx < len(tokens) and tokens[idx].startswith("CELL_DATA"):
        idx += 3  # CELL_DATA, SCALARS, LOOKUP_TABLE
        values = np.array([float(tokens[idx + i]) for i in range(n_polys)])
    return points, tris, values


def write_eoc_csv(records, path):
    """CSV table elements,h_bar,l1_error,eoc; orders at 2 decimals, rest exact."""
    if not records:
        raise ConfigurationError("refusing to write an empty convergence table")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["elements", "h_bar", "l1_error", "eoc"])
    for rec in records:
        eoc = "" if rec.eoc is None else f"{rec.eoc:.2f}"
        writer.writerow([rec.elements, _fmt(rec.h_bar), _fmt(rec.l1_error), eoc])
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(buf.getvalue())
    except OSError as err:
        raise OSError(f"cannot write CSV file {path}: {err}") from err


def read_eoc_csv(path):
    """Read back a write_eoc_csv table as (elements, h_bar, l1_error, eoc|None) rows."""
    with open(path, "r", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["elements", "h_bar", "l1_error", "eoc"]:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = []
        for rec in reader:
            rows.append(
                (int(rec[0]), float(rec[1]), float(rec[2]), float(rec[3]) if rec[3] else None)
            )
    return rows
