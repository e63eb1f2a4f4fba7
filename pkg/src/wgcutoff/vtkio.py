"""Legacy ASCII VTK export of meshes and per-mode field frames.

Writes an UNSTRUCTURED_GRID with the mesh nodes as POINTS, triangles as
CELLS of type 5, per-triangle vector fields (z component zero) as CELL_DATA
VECTORS and per-node scalars as POINT_DATA SCALARS.  All floats are printed
with 17 significant digits so files are diffable and round-trip exactly.
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh

VTK_TRIANGLE = 5


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_vtk(mesh: Mesh, title: str = "wgcutoff fields",
              point_scalars: dict | None = None,
              cell_vectors: dict | None = None,
              cell_scalars: dict | None = None) -> str:
    """Serialize the mesh plus named real-valued data arrays.

    ``point_scalars`` maps name -> (V,) array, ``cell_vectors`` maps
    name -> (T, 2) array and ``cell_scalars`` maps name -> (T,) array.
    Complex fields should be split into explicit real/imaginary arrays by
    the caller.
    """
    point_scalars = point_scalars or {}
    cell_vectors = cell_vectors or {}
    cell_scalars = cell_scalars or {}
    for name, values in point_scalars.items():
        if np.shape(values) != (mesh.num_nodes,):
            raise ValueError(f"point scalar {name!r} has wrong shape")
    for name, values in cell_vectors.items():
        if np.shape(values) != (mesh.num_triangles, 2):
            raise ValueError(f"cell vector {name!r} has wrong shape")
    for name, values in cell_scalars.items():
        if np.shape(values) != (mesh.num_triangles,):
            raise ValueError(f"cell scalar {name!r} has wrong shape")

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_nodes} double",
    ]
    lines.extend(f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.nodes)
    lines.append(f"CELLS {mesh.num_triangles} {4 * mesh.num_triangles}")
    lines.extend(f"3 {i} {j} {k}" for i, j, k in mesh.triangles)
    lines.append(f"CELL_TYPES {mesh.num_triangles}")
    lines.extend([str(VTK_TRIANGLE)] * mesh.num_triangles)

    if cell_vectors or cell_scalars:
        lines.append(f"CELL_DATA {mesh.num_triangles}")
        for name, values in cell_vectors.items():
            lines.append(f"VECTORS {name} double")
            lines.extend(f"{_fmt(vx)} {_fmt(vy)} 0" for vx, vy in values)
        for name, values in cell_scalars.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in values)
    if point_scalars:
        lines.append(f"POINT_DATA {mesh.num_nodes}")
        for name, values in point_scalars.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in values)
    return "\n".join(lines) + "\n"
