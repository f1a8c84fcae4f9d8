"""Plain-text mesh files and legacy-VTK output.

Mesh format: a header line ``nv nc nb`` followed by ``nv`` lines ``x y``,
``nc`` lines ``v0 v1 v2`` and ``nb`` lines ``v0 v1 tag`` with tag D or N.
"""

from __future__ import annotations

import numpy as np

from .mesh import _CHAR_OF, Triangulation, MeshError

__all__ = ["read_mesh", "write_mesh", "write_vtk"]


def read_mesh(path):
    with open(path) as fh:
        tokens = fh.read().split()
    it = iter(tokens)
    try:
        nv, nc, nb = int(next(it)), int(next(it)), int(next(it))
        coords = [(float(next(it)), float(next(it))) for _ in range(nv)]
        cells = [(int(next(it)), int(next(it)), int(next(it))) for _ in range(nc)]
        boundary = [(int(next(it)), int(next(it)), next(it)) for _ in range(nb)]
    except StopIteration:
        raise MeshError(f"truncated mesh file {path}") from None
    return Triangulation(coords, cells, boundary)


def write_mesh(mesh, path):
    v = mesh.view()
    singles = np.flatnonzero(v.e_c2 < 0)
    bnd = []
    for k in singles:
        key = (int(v.uedges[k, 0]), int(v.uedges[k, 1]))
        bf = mesh._bfacet.get(key)
        if bf is not None:
            bnd.append((key[0], key[1], _CHAR_OF[bf[0]]))
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {v.tris.shape[0]} {len(bnd)}\n")
        for x, y in mesh.coords():
            fh.write(f"{x!r} {y!r}\n")
        for tri in v.tris:
            fh.write(f"{tri[0]} {tri[1]} {tri[2]}\n")
        for a, b, tag in bnd:
            fh.write(f"{a} {b} {tag}\n")


def write_vtk(path, mesh, point_data=None, cell_data=None, title="stabfem output"):
    """Legacy ASCII VTK UNSTRUCTURED_GRID with triangle cells."""
    v = mesh.view()
    X = v.X
    tris = v.tris
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {X.shape[0]} double\n")
        for x, y in X:
            fh.write(f"{x!r} {y!r} 0.0\n")
        fh.write(f"\nCELLS {tris.shape[0]} {4 * tris.shape[0]}\n")
        for tri in tris:
            fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")
        fh.write(f"\nCELL_TYPES {tris.shape[0]}\n")
        for _ in range(tris.shape[0]):
            fh.write("5\n")
        if point_data:
            fh.write(f"\nPOINT_DATA {X.shape[0]}\n")
            for name, values in point_data.items():
                values = np.asarray(values, dtype=float)
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for val in values:
                    fh.write(f"{val!r}\n")
        if cell_data:
            fh.write(f"\nCELL_DATA {tris.shape[0]}\n")
            for name, values in cell_data.items():
                values = np.asarray(values, dtype=float)
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for val in values:
                    fh.write(f"{val!r}\n")
