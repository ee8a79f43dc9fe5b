"""Legacy ASCII VTK unstructured-grid output.

Layout written by :func:`write_vtk`::

    # vtk DataFile Version 3.0
    <title>
    ASCII
    DATASET UNSTRUCTURED_GRID
    POINTS <nv> double          (x y z per line, z = 0 in 2D)
    CELLS <nc> <nc*(d+2)>       (count followed by 0-based vertex indices)
    CELL_TYPES <nc>             (5 = triangle, 10 = tetrahedron)
    POINT_DATA <nv>
    SCALARS <name> double 1
    LOOKUP_TABLE default
    <one value per line>
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from expfit.mesh import SimplicialMesh

CELL_TYPE = {2: 5, 3: 10}


def write_vtk(mesh: SimplicialMesh, path, point_data: dict, title: str = "expfit solution") -> None:
    nv, nc, dim = mesh.num_vertices, mesh.num_cells, mesh.dim
    pts = np.zeros((nv, 3))
    pts[:, :dim] = mesh.vertices
    out = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    out += [f"{p[0]!r} {p[1]!r} {p[2]!r}" for p in pts.tolist()]
    out.append(f"CELLS {nc} {nc * (dim + 2)}")
    out += [f"{dim + 1} " + " ".join(map(str, c)) for c in mesh.cells.tolist()]
    out.append(f"CELL_TYPES {nc}")
    out += [str(CELL_TYPE[dim])] * nc
    out.append(f"POINT_DATA {nv}")
    for name, values in point_data.items():
        values = np.asarray(values, dtype=float).reshape(nv)
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [repr(v) for v in values.tolist()]
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk_point_data(path, name: str = "u") -> np.ndarray:
    """Read back one scalar point-data array written by :func:`write_vtk`."""
    lines = Path(path).read_text().splitlines()
    nv = None
    for k, line in enumerate(lines):
        if line.startswith("POINT_DATA"):
            nv = int(line.split()[1])
        if line.startswith("SCALARS") and line.split()[1] == name and nv is not None:
            return np.array([float(v) for v in lines[k + 2:k + 2 + nv]])
    raise KeyError(f"no point data named {name!r} in {path}")
