"""Generate the initial Hemker mesh shipped as package data.

Rectangle (-3, 9) x (-3, 3) with the unit disk removed: a ring of vertices on
the circle, a relief ring at r = 2, lattice points elsewhere, Delaunay
triangulation with the disk carved out.  Run from the repository root:

    python3 tools/gen_hemker_mesh.py
"""

import math
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay


def build_points():
    pts = []
    # circle ring, exactly on r = 1
    n_c = 20
    for k in range(n_c):
        t = 2.0 * math.pi * k / n_c
        pts.append((math.cos(t), math.sin(t)))
    # relief rings around the cylinder
    n_r = 16
    for k in range(n_r):
        t = 2.0 * math.pi * (k + 0.5) / n_r
        pts.append((1.9 * math.cos(t), 1.9 * math.sin(t)))
    # outer boundary, spacing 1.0 on x, corners included
    xs = np.linspace(-3.0, 9.0, 13)
    ys = np.linspace(-3.0, 3.0, 7)
    for x in xs:
        pts.append((float(x), -3.0))
        pts.append((float(x), 3.0))
    for y in ys[1:-1]:
        pts.append((-3.0, float(y)))
        pts.append((9.0, float(y)))
    # interior lattice, keep clear of the relief ring
    for x in np.linspace(-3.0, 9.0, 13)[1:-1]:
        for y in np.linspace(-3.0, 3.0, 7)[1:-1]:
            if math.hypot(x, y) < 2.5:
                continue
            pts.append((float(x), float(y)))
    # second relief ring
    n_r2 = 12
    for k in range(n_r2):
        t = 2.0 * math.pi * (k + 0.25) / n_r2
        x, y = 3.0 * math.cos(t), 3.0 * math.sin(t)
        if abs(y) < 2.6 and -3.0 < x < 9.0:
            pts.append((x, y))
    # a few wake points behind the cylinder where the plume develops
    for x in (1.7, 2.6, 3.6):
        for y in (-0.55, 0.0, 0.55):
            pts.append((x, y))
    for x in (4.6, 5.6, 6.6, 7.6):
        for y in (-0.5, 0.5):
            pts.append((x, y))
    out = []
    for p in pts:
        if all(math.hypot(p[0] - q[0], p[1] - q[1]) > 1e-9 for q in out):
            out.append((float(p[0]), float(p[1])))
    return np.array(out, dtype=float)


def main():
    pts = build_points()
    tri = Delaunay(pts)
    cells = []
    for simplex in tri.simplices:
        p = pts[simplex]
        cx, cy = p.mean(axis=0)
        if math.hypot(cx, cy) < 1.0:
            continue  # inside the disk
        area = 0.5 * (
            (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
            - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1])
        )
        if abs(area) < 1e-12:
            continue
        if area < 0:
            simplex = simplex[[0, 2, 1]]
        cells.append(tuple(int(i) for i in simplex))

    used = sorted({v for c in cells for v in c})
    remap = {v: i for i, v in enumerate(used)}
    coords = pts[used]
    cells = [tuple(remap[v] for v in c) for c in cells]

    # boundary facets: edges adjacent to exactly one kept cell
    count = {}
    for c in cells:
        for k in range(3):
            e = tuple(sorted((c[k], c[(k + 1) % 3])))
            count[e] = count.get(e, 0) + 1
    boundary = []
    for (a, b), n in sorted(count.items()):
        if n != 1:
            continue
        pa, pb = coords[a], coords[b]
        on_circle = (
            abs(math.hypot(*pa) - 1.0) < 1e-9 and abs(math.hypot(*pb) - 1.0) < 1e-9
        )
        on_inflow = abs(pa[0] + 3.0) < 1e-9 and abs(pb[0] + 3.0) < 1e-9
        tag = "D" if (on_circle or on_inflow) else "N"
        boundary.append((a, b, tag))

    path = Path(__file__).resolve().parents[1] / "src" / "stabfem" / "data"
    path.mkdir(parents=True, exist_ok=True)
    out = path / "hemker.mesh"
    with open(out, "w") as fh:
        fh.write(f"{len(coords)} {len(cells)} {len(boundary)}\n")
        for x, y in coords:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for c in cells:
            fh.write(f"{c[0]} {c[1]} {c[2]}\n")
        for a, b, tag in boundary:
            fh.write(f"{a} {b} {tag}\n")
    print(f"wrote {out}: {len(coords)} vertices, {len(cells)} cells, {len(boundary)} boundary facets")


if __name__ == "__main__":
    main()
