"""File emitters and run configuration.

All numeric output uses 17 significant digits (lossless round-trip for
doubles) and LF line endings, so a rerun with the same configuration
reproduces every artifact byte for byte.
"""

import os

import numpy as np

from .mesh import CellKind

__all__ = [
    "ConfigError",
    "fmt",
    "write_vtk",
    "write_csv",
    "read_csv",
    "parse_config_file",
    "write_manifest",
]

VTK_CELL_TYPE = {
    CellKind.TRIANGLE: 5,
    CellKind.QUADRILATERAL: 9,
    CellKind.TETRAHEDRON: 10,
    CellKind.HEXAHEDRON: 12,
}


class ConfigError(Exception):
    pass


def fmt(x):
    """Format a float with 17 significant digits."""
    return format(float(x), ".17g")


def write_vtk(mesh, cell_fields, path, title="mfmfe fields"):
    """Write a legacy-VTK ASCII unstructured grid with cell-data scalars."""
    for name, values in cell_fields.items():
        if np.asarray(values).shape != (mesh.num_cells,):
            raise ValueError(f"field {name!r} does not match the cell count")
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_vertices} double",
    ]
    pts = mesh.vertices
    if mesh.dim == 2:
        pts = np.column_stack([pts, np.zeros(mesh.num_vertices)])
    for p in pts:
        lines.append(" ".join(fmt(c) for c in p))
    nv = mesh.cells.shape[1]
    lines.append(f"CELLS {mesh.num_cells} {mesh.num_cells * (nv + 1)}")
    for cell in mesh.cells:
        lines.append(f"{nv} " + " ".join(str(v) for v in cell))
    lines.append(f"CELL_TYPES {mesh.num_cells}")
    code = VTK_CELL_TYPE[mesh.kind]
    lines.extend([str(code)] * mesh.num_cells)
    if cell_fields:
        lines.append(f"CELL_DATA {mesh.num_cells}")
        for name, values in cell_fields.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(fmt(v) for v in np.asarray(values))
    _write_text(path, lines)


def write_csv(header, rows, path):
    """CSV with a header row; floats at 17 significant digits."""
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            elif isinstance(v, float) and np.isnan(v):
                cells.append("")
            elif isinstance(v, (float, np.floating)):
                cells.append(fmt(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    _write_text(path, lines)


def read_csv(path):
    with open(path, "r", newline="") as fh:
        raw = [line.rstrip("\n") for line in fh]
    header = raw[0].split(",")
    rows = []
    for line in raw[1:]:
        if not line:
            continue
        row = []
        for tok in line.split(","):
            if tok == "":
                row.append(float("nan"))
                continue
            try:
                row.append(float(tok))
            except ValueError:
                row.append(tok)
        rows.append(row)
    return header, rows


def parse_config_file(path):
    """Flat key=value configuration; '#' starts a comment."""
    out = {}
    try:
        with open(path, "r") as fh:
            for ln, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
                key, value = line.split("=", 1)
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return out


def write_manifest(path, resolved):
    """Record the fully resolved run configuration (deterministic content)."""
    from . import __version__

    items = dict(resolved)
    items["version"] = __version__
    lines = [f"{k}={items[k]}" for k in sorted(items)]
    _write_text(path, lines)


def _write_text(path, lines):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
