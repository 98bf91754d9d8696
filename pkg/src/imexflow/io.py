"""CSV time series and legacy-VTK field output."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .diagnostics import CHANNELS, TimeSeries

HEADER_NOTE = "# delta_p = (int_inlet p - int_outlet p) / H, not normalised"


class OutputError(OSError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v)) if not np.isfinite(v) else f"{v:.17g}"


def write_csv(series: TimeSeries, path):
    """One row per time stamp; channel columns in canonical order, absent ones omitted."""
    cols = [c for c in CHANNELS if c in series.channels]
    cols += sorted(c for c in series.channels if c not in CHANNELS)
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            if "delta_p" in cols:
                fh.write(HEADER_NOTE + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", *cols])
            for i, t in enumerate(series.times):
                w.writerow([_fmt(t), *(_fmt(series.channels[c][i]) for c in cols)])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def read_csv(path) -> TimeSeries:
    with Path(path).open() as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    series = TimeSeries(header[1:])
    for r in body:
        series.append(float(r[0]), **{c: float(v) for c, v in zip(header[1:], r[1:])})
    return series


def write_vtk(path, layout, u, p, nu, title="imexflow"):
    """Legacy ASCII VTK 3.0 unstructured grid of bilinear quads on the mesh vertices."""
    mesh = layout.mesh
    n1, n2 = layout.n_q1, layout.n_q2
    xy = mesh.nodes
    path = Path(path)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n1} double",
    ]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in xy]
    ne = mesh.n_elements
    lines.append(f"CELLS {ne} {5 * ne}")
    lines += ["4 " + " ".join(map(str, el)) for el in mesh.elements]
    lines.append(f"CELL_TYPES {ne}")
    lines += ["9"] * ne
    lines.append(f"POINT_DATA {n1}")
    lines.append("VECTORS velocity double")
    ux, uy = u[:n1], u[n2 : n2 + n1]
    lines += [f"{a:.17g} {b:.17g} 0" for a, b in zip(ux, uy)]
    for name, field in (("pressure", p), ("viscosity", nu)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.17g}" for v in field]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def read_vtk(path) -> dict:
    """Minimal reader for files produced by :func:`write_vtk`."""
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk DataFile Version 3.0"):
        raise ValueError("not a legacy VTK 3.0 file")
    out: dict = {"point_data": {}}
    i = 4
    while i < len(tokens):
        parts = tokens[i].split()
        if not parts:
            i += 1
            continue
        head = parts[0]
        if head == "POINTS":
            n = int(parts[1])
            out["points"] = np.array([list(map(float, tokens[i + 1 + k].split())) for k in range(n)])
            i += n + 1
        elif head == "CELLS":
            n = int(parts[1])
            out["cells"] = np.array([list(map(int, tokens[i + 1 + k].split()))[1:] for k in range(n)])
            i += n + 1
        elif head == "CELL_TYPES":
            n = int(parts[1])
            out["cell_types"] = np.array([int(tokens[i + 1 + k]) for k in range(n)])
            i += n + 1
        elif head == "POINT_DATA":
            out["n_point_data"] = int(parts[1])
            i += 1
        elif head == "VECTORS":
            n = out["n_point_data"]
            out["point_data"][parts[1]] = np.array([list(map(float, tokens[i + 1 + k].split())) for k in range(n)])
            i += n + 1
        elif head == "SCALARS":
            n = out["n_point_data"]
            out["point_data"][parts[1]] = np.array([float(tokens[i + 2 + k]) for k in range(n)])
            i += n + 2
        else:
            raise ValueError(f"unexpected VTK section {head!r}")
    return out


def write_outputs(series: TimeSeries, state, layout, csv_path=None, vtk_path=None):
    written = []
    if csv_path:
        written.append(write_csv(series, csv_path))
    if vtk_path:
        written.append(write_vtk(vtk_path, layout, state.u, state.p, state.nu))
    return written
