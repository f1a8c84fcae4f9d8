"""Adaptive 2-D simplicial meshes: red refinement, hanging vertices, green closure.

A :class:`Triangulation` owns its whole refinement forest.  Refining a cell
attaches children to it and the *active* mesh (the leaves of the forest, minus
removed closure cells) is what the discretization sees.  Mutation is
single-writer; all derived connectivity lives in a cached view that is rebuilt
lazily after a mutation, so a mesh that is no longer being refined can be read
concurrently.

Conventions:

* cells are counter-clockwise triples of vertex ids,
* at most one hanging vertex per active edge (enforced by a refinement
  cascade), and hanging vertices sit at edge midpoints,
* closure ("green") cells are produced only by :meth:`conforming_closure`,
  are never refined, and are removed wholesale before re-refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "INTERIOR",
    "DIRICHLET",
    "NEUMANN",
    "GEOM_TOL",
    "MeshError",
    "CircleBoundary",
    "ConstraintSet",
    "DelaunayReport",
    "Triangulation",
    "unit_square_mesh",
    "refine_regular",
    "conforming_closure",
    "hanging_constraints",
    "delaunay_report",
    "project_boundary",
]

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2

GEOM_TOL = 1e-12

_TAG_OF = {"D": DIRICHLET, "N": NEUMANN}
_CHAR_OF = {DIRICHLET: "D", NEUMANN: "N"}


class MeshError(Exception):
    """Invalid mesh operation: bad marks, unsupported nesting, degenerate geometry."""


@dataclass(frozen=True)
class CircleBoundary:
    """Curved-boundary descriptor projecting vertices radially onto a circle."""

    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def on_curve(self, x, y, tol=1e-9):
        d = math.hypot(x - self.center[0], y - self.center[1])
        return abs(d - self.radius) <= tol * max(1.0, self.radius)

    def project(self, x, y):
        vx = x - self.center[0]
        vy = y - self.center[1]
        n = math.hypot(vx, vy)
        if n < 1e-15:
            raise MeshError("degenerate projection: vertex at circle center")
        s = self.radius / n
        return self.center[0] + vx * s, self.center[1] + vy * s


class ConstraintSet:
    """Hanging-vertex constraints: one row of coefficients per hanging vertex.

    Each row maps a hanging vertex q to pairs ``(p, a_qp)`` over non-hanging
    vertices p, so a continuous P1 function satisfies ``v(q) = sum a_qp v(p)``.
    For mid-edge hanging vertices the rows are exactly ``{p: 1/2, r: 1/2}``.
    """

    def __init__(self, rows=None):
        self.rows = dict(rows or {})
        for q, pairs in self.rows.items():
            s = sum(w for _, w in pairs)
            if abs(s - 1.0) > 1e-12:
                raise MeshError(f"constraint row for vertex {q} sums to {s}, not 1")

    @property
    def hanging(self):
        return sorted(self.rows)

    def __len__(self):
        return len(self.rows)

    def __bool__(self):
        return bool(self.rows)

    def row(self, q):
        return self.rows[q]


@dataclass
class DelaunayReport:
    """Interior edges whose opposite-angle sum exceeds pi, with adjacent cells."""

    count: int
    edges: list
    cell_ids: set


class _View:
    """Cached numpy connectivity of the active mesh (rebuilt after mutation)."""

    __slots__ = (
        "X",
        "acells",
        "tris",
        "areas",
        "diam",
        "uedges",
        "e_c1",
        "e_c2",
        "hanging",
        "carrier_cell",
        "carrier_rows",
        "fint_v",
        "fint_c",
        "fneu_v",
        "fneu_c",
        "fdir_v",
        "fdir_c",
        "e3_v",
        "e3_pair",
        "e3_c",
    )


def _sorted_edge(a, b):
    return (a, b) if a < b else (b, a)


class Triangulation:
    """2-D triangulation with refinement history and boundary metadata."""

    def __init__(self, coords, cells, boundary=()):
        coords = np.asarray(coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise MeshError("coords must be an (n, 2) array")
        self._x = [tuple(map(float, p)) for p in coords]
        nv = len(self._x)
        self._vtag = [INTERIOR] * nv
        self._on_curve = [False] * nv
        self._cv = []
        self._parent = []
        self._children = []
        self._origin = []
        self._removed = []
        for c in cells:
            v = tuple(int(i) for i in c)
            if len(v) != 3 or len(set(v)) != 3 or max(v) >= nv or min(v) < 0:
                raise MeshError(f"invalid cell {v}")
            self._cv.append(v)
            self._parent.append(-1)
            self._children.append(None)
            self._origin.append("initial")
            self._removed.append(False)
        self._bfacet = {}
        for v0, v1, tag in boundary:
            t = _TAG_OF.get(tag, tag)
            if t not in (DIRICHLET, NEUMANN):
                raise MeshError(f"boundary tag {tag!r} must be D or N")
            self._bfacet[_sorted_edge(int(v0), int(v1))] = (t, False)
        self._edge_mid = {}
        self.curve = None
        self.level = 0
        self.frozen = False
        self._cache = None
        self._tag_boundary_vertices()
        self._validate_initial()

    # ------------------------------------------------------------------
    # construction helpers / validation

    def _tag_boundary_vertices(self):
        # Dirichlet dominates at corners between the two boundary parts
        for (a, b), (t, _) in self._bfacet.items():
            for v in (a, b):
                if t == DIRICHLET:
                    self._vtag[v] = DIRICHLET
                elif self._vtag[v] == INTERIOR:
                    self._vtag[v] = NEUMANN

    def _validate_initial(self):
        # building the view classifies every single-incidence edge as tagged
        # boundary, hanging carrier, or hanging sub-edge, and raises otherwise
        v = self.view()
        used = np.unique(v.tris)
        if used.size != len(self._x):
            raise MeshError("mesh has vertices not referenced by any cell")

    # ------------------------------------------------------------------
    # basic queries

    @property
    def n_vertices(self):
        return len(self._x)

    @property
    def dof(self):
        """Number of vertices of the active mesh (hanging and Dirichlet included)."""
        return len(self._x)

    @property
    def n_cells(self):
        return len(self._cv)

    def coords(self):
        return np.asarray(self._x, dtype=float)

    def vertex_tags(self):
        return np.asarray(self._vtag, dtype=int)

    def active_cell_ids(self):
        return [
            i
            for i in range(len(self._cv))
            if self._children[i] is None and not self._removed[i]
        ]

    def cell_vertices(self, cid):
        return self._cv[cid]

    def cell_origin(self, cid):
        return self._origin[cid]

    def cell_parent(self, cid):
        return self._parent[cid]

    def total_area(self):
        return float(self.view().areas.sum())

    @property
    def hanging_vertices(self):
        return sorted(self.view().hanging)

    # ------------------------------------------------------------------
    # cached view

    def _invalidate(self):
        self._cache = None

    def view(self):
        if self._cache is None:
            self._cache = self._build_view()
        return self._cache

    def _build_view(self):
        v = _View()
        X = np.asarray(self._x, dtype=float)
        acells = np.array(self.active_cell_ids(), dtype=np.int64)
        if acells.size == 0:
            raise MeshError("mesh has no active cells")
        tris = np.array([self._cv[i] for i in acells], dtype=np.int64)
        p0, p1, p2 = X[tris[:, 0]], X[tris[:, 1]], X[tris[:, 2]]
        areas = 0.5 * (
            (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
            - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
        )
        if np.any(areas <= 0.0):
            bad = acells[int(np.argmin(areas))]
            raise MeshError(f"cell {bad} has non-positive area")
        l01 = np.hypot(p1[:, 0] - p0[:, 0], p1[:, 1] - p0[:, 1])
        l12 = np.hypot(p2[:, 0] - p1[:, 0], p2[:, 1] - p1[:, 1])
        l20 = np.hypot(p0[:, 0] - p2[:, 0], p0[:, 1] - p2[:, 1])
        diam = np.maximum(np.maximum(l01, l12), l20)

        m = tris.shape[0]
        nv = X.shape[0]
        e = tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        e = np.sort(e, axis=1)
        key = e[:, 0] * np.int64(nv) + e[:, 1]
        order = np.argsort(key, kind="stable")
        ks = key[order]
        cpos = np.repeat(np.arange(m, dtype=np.int64), 3)[order]
        first = np.ones(ks.size, dtype=bool)
        first[1:] = ks[1:] != ks[:-1]
        starts = np.flatnonzero(first)
        counts = np.diff(np.append(starts, ks.size))
        if np.any(counts > 2):
            raise MeshError("an edge is shared by more than two cells")
        ua = (ks[starts] // nv).astype(np.int64)
        ub = (ks[starts] % nv).astype(np.int64)
        c1 = cpos[starts]
        second = np.minimum(starts + 1, ks.size - 1)
        c2 = np.where(counts == 2, cpos[second], -1)

        v.X = X
        v.acells = acells
        v.tris = tris
        v.areas = areas
        v.diam = diam
        v.uedges = np.column_stack([ua, ub])
        v.e_c1 = c1
        v.e_c2 = c2

        # hanging-vertex scan over single-incidence, non-boundary edges
        singles = np.flatnonzero(c2 < 0)
        bset = self._bfacet
        cand = [k for k in singles if (int(ua[k]), int(ub[k])) not in bset]
        cand_vs = set()
        for k in cand:
            cand_vs.add(int(ua[k]))
            cand_vs.add(int(ub[k]))
        adj = {w: set() for w in cand_vs}
        if cand_vs:
            mask = np.isin(ua, list(cand_vs)) | np.isin(ub, list(cand_vs))
            for a, b in v.uedges[mask]:
                a, b = int(a), int(b)
                if a in adj:
                    adj[a].add(b)
                if b in adj:
                    adj[b].add(a)
        hanging = {}
        carrier_rows = set()
        carrier_cell = {}
        for k in cand:
            a, b = int(ua[k]), int(ub[k])
            common = (adj[a] & adj[b]) - {a, b}
            inner = [w for w in common if self._strictly_inside(X, a, b, w)]
            if len(inner) > 1:
                raise MeshError(f"edge ({a},{b}) carries more than one hanging vertex")
            if inner:
                w = inner[0]
                mid = 0.5 * (X[a] + X[b])
                scale = max(1.0, float(np.hypot(*(X[b] - X[a]))))
                if np.hypot(*(X[w] - mid)) > 1e-9 * scale:
                    raise MeshError(f"hanging vertex {w} is not at an edge midpoint")
                hanging[w] = (a, b)
                carrier_rows.add(k)
                carrier_cell[w] = int(c1[k])
        v.hanging = hanging
        v.carrier_rows = carrier_rows
        v.carrier_cell = carrier_cell

        # facets
        fint_v, fint_c = [], []
        fneu_v, fneu_c = [], []
        fdir_v, fdir_c = [], []
        two = np.flatnonzero(counts == 2)
        for k in two:
            fint_v.append((int(ua[k]), int(ub[k])))
            fint_c.append((int(c1[k]), int(c2[k])))
        for k in singles:
            a, b = int(ua[k]), int(ub[k])
            bf = bset.get((a, b))
            if bf is not None:
                (fdir_v if bf[0] == DIRICHLET else fneu_v).append((a, b))
                (fdir_c if bf[0] == DIRICHLET else fneu_c).append(int(c1[k]))
                continue
            if k in carrier_rows:
                continue
            if a in hanging and b in hanging[a]:
                fint_v.append((a, b))
                fint_c.append((int(c1[k]), carrier_cell[a]))
            elif b in hanging and a in hanging[b]:
                fint_v.append((a, b))
                fint_c.append((int(c1[k]), carrier_cell[b]))
            else:
                raise MeshError(
                    f"edge ({a},{b}) is neither boundary-tagged nor part of a "
                    "hanging-vertex interface"
                )
        v.fint_v = np.array(fint_v, dtype=np.int64).reshape(-1, 2)
        v.fint_c = np.array(fint_c, dtype=np.int64).reshape(-1, 2)
        v.fneu_v = np.array(fneu_v, dtype=np.int64).reshape(-1, 2)
        v.fneu_c = np.array(fneu_c, dtype=np.int64)
        v.fdir_v = np.array(fdir_v, dtype=np.int64).reshape(-1, 2)
        v.fdir_c = np.array(fdir_c, dtype=np.int64)

        # edge table for edge-based estimator terms: every active edge except
        # subdivided carrier edges; hanging endpoints map to their carrier pair
        keep = np.ones(ua.size, dtype=bool)
        for k in carrier_rows:
            keep[k] = False
        e3_v = v.uedges[keep].copy()
        e3_c = np.column_stack([c1[keep], c2[keep]])
        e3_pair = e3_v.copy()
        if hanging:
            hs = np.fromiter(hanging.keys(), dtype=np.int64)
            touched = np.flatnonzero(np.isin(e3_v[:, 0], hs) | np.isin(e3_v[:, 1], hs))
            for idx in touched:
                a, b = int(e3_v[idx, 0]), int(e3_v[idx, 1])
                if a in hanging and b in hanging:
                    e3_pair[idx] = (-1, -1)
                elif a in hanging:
                    pr = hanging[a]
                    e3_pair[idx] = pr if b in pr else (-1, -1)
                else:
                    pr = hanging[b]
                    e3_pair[idx] = pr if a in pr else (-1, -1)
                if e3_pair[idx, 0] >= 0 and e3_c[idx, 1] < 0:
                    w = a if a in hanging else b
                    e3_c[idx, 1] = carrier_cell[w]
        v.e3_v = e3_v
        v.e3_pair = e3_pair
        v.e3_c = e3_c
        return v

    @staticmethod
    def _strictly_inside(X, a, b, w, tol=GEOM_TOL):
        ab = X[b] - X[a]
        aw = X[w] - X[a]
        L2 = float(ab @ ab)
        if L2 <= 0.0:
            return False
        cross = ab[0] * aw[1] - ab[1] * aw[0]
        if abs(cross) > tol * math.sqrt(L2):
            return False
        t = float(ab @ aw) / L2
        return tol < t < 1.0 - tol

    # ------------------------------------------------------------------
    # mutation: red refinement, cascade, closure

    def _assert_mutable(self):
        if self.frozen:
            raise MeshError("triangulation snapshot is frozen")

    def _add_vertex(self, x, y, tag, on_curve):
        self._x.append((float(x), float(y)))
        self._vtag.append(tag)
        self._on_curve.append(on_curve)
        return len(self._x) - 1

    def _midpoint(self, a, b):
        key = _sorted_edge(a, b)
        m = self._edge_mid.get(key)
        if m is not None:
            return m
        xa, ya = self._x[a]
        xb, yb = self._x[b]
        x, y = 0.5 * (xa + xb), 0.5 * (ya + yb)
        bf = self._bfacet.get(key)
        tag = INTERIOR
        curved = False
        if bf is not None:
            tag, curved = bf
            if curved:
                x, y = self.curve.project(x, y)
        m = self._add_vertex(x, y, tag, curved)
        self._edge_mid[key] = m
        if bf is not None:
            self._bfacet[_sorted_edge(a, m)] = bf
            self._bfacet[_sorted_edge(m, b)] = bf
        return m

    def _append_cell(self, verts, parent, origin):
        self._cv.append(tuple(verts))
        self._parent.append(parent)
        self._children.append(None)
        self._origin.append(origin)
        self._removed.append(False)
        return len(self._cv) - 1

    def _split_red(self, cids):
        for cid in cids:
            v0, v1, v2 = self._cv[cid]
            m01 = self._midpoint(v0, v1)
            m12 = self._midpoint(v1, v2)
            m20 = self._midpoint(v2, v0)
            kids = (
                self._append_cell((v0, m01, m20), cid, "regular"),
                self._append_cell((m01, v1, m12), cid, "regular"),
                self._append_cell((m20, m12, v2), cid, "regular"),
                self._append_cell((m01, m12, m20), cid, "regular"),
            )
            self._children[cid] = kids
        self._invalidate()

    def _count_inner(self, a, b):
        m = self._edge_mid.get(_sorted_edge(a, b))
        if m is None:
            return 0
        return 1 + self._count_inner(a, m) + self._count_inner(m, b)

    def _cascade(self):
        # Restore one-level nesting: (a) refine regularly every cell having an
        # edge with more than one hanging vertex; (b) when a carrier edge
        # endpoint is itself hanging, refine the carrier cell, which feeds
        # back into (a).  Repeat until stable.
        for _ in range(200):
            bad = set()
            for cid in self.active_cell_ids():
                v0, v1, v2 = self._cv[cid]
                for a, b in ((v0, v1), (v1, v2), (v2, v0)):
                    if self._count_inner(a, b) > 1:
                        bad.add(cid)
                        break
            if not bad:
                v = self.view()
                for w, (a, b) in v.hanging.items():
                    if a in v.hanging or b in v.hanging:
                        bad.add(int(v.acells[v.carrier_cell[w]]))
            if not bad:
                return
            for cid in bad:
                if self._origin[cid] == "closure":
                    raise MeshError(
                        "closure cells must be removed before refining "
                        "their neighborhood"
                    )
            self._split_red(sorted(bad))
        raise MeshError("hanging-vertex cascade did not terminate")

    def refine_regular(self, marked):
        """Refine the marked leaf cells into four midpoint children each.

        Afterwards the one-hanging-vertex-per-edge invariant is restored by
        regularly refining any cell whose edge carries more than one hanging
        vertex.
        """
        self._assert_mutable()
        marked = sorted(set(int(c) for c in marked))
        active = set(self.active_cell_ids())
        for cid in marked:
            if cid not in active:
                raise MeshError(f"invalid mark: cell {cid} is not an active leaf")
            if self._origin[cid] == "closure":
                raise MeshError(
                    f"invalid mark: cell {cid} is a closure cell; remove closure "
                    "cells (or mark the parent) before refining"
                )
        self._split_red(marked)
        self._cascade()
        self.level += 1
        self._invalidate()
        return self

    def refine_uniform(self):
        return self.refine_regular(self.active_cell_ids())

    def conforming_closure(self):
        """Eliminate hanging vertices: red-refine cells with two or more of
        them, then bisect cells with exactly one toward the opposite vertex."""
        self._assert_mutable()
        if not self.view().hanging:
            return self
        for _ in range(200):
            v = self.view()
            counts = {}
            for w, cpos in v.carrier_cell.items():
                counts[cpos] = counts.get(cpos, 0) + 1
            bad = sorted(int(v.acells[p]) for p, n in counts.items() if n >= 2)
            if not bad:
                break
            self._split_red(bad)
            self._cascade()
        else:
            raise MeshError("conforming closure did not terminate")
        v = self.view()
        greens = []
        for w, cpos in v.carrier_cell.items():
            a, b = v.hanging[w]
            greens.append((int(v.acells[cpos]), w, a, b))
        for cid, w, a, b in sorted(greens):
            self._split_green(cid, w, a, b)
        self._invalidate()
        if self.view().hanging:
            raise MeshError("closure left hanging vertices behind")
        return self

    def _split_green(self, cid, w, a, b):
        verts = self._cv[cid]
        for k in range(3):
            va, vb = verts[k], verts[(k + 1) % 3]
            if {va, vb} == {a, b}:
                vc = verts[(k + 2) % 3]
                kids = (
                    self._append_cell((va, w, vc), cid, "closure"),
                    self._append_cell((w, vb, vc), cid, "closure"),
                )
                self._children[cid] = kids
                return
        raise MeshError(f"carrier edge ({a},{b}) is not an edge of cell {cid}")

    def remove_closure_cells(self):
        """Remove all active closure cells, reactivating their parents."""
        self._assert_mutable()
        for cid in self.active_cell_ids():
            if self._origin[cid] == "closure":
                self._removed[cid] = True
                parent = self._parent[cid]
                if parent >= 0:
                    self._children[parent] = None
        self._invalidate()
        return self

    def closure_parents(self, marked):
        """Map marks on closure cells to their parents (other marks pass through)."""
        out = set()
        for cid in marked:
            cid = int(cid)
            if self._origin[cid] == "closure":
                out.add(self._parent[cid])
            else:
                out.add(cid)
        return out

    # ------------------------------------------------------------------
    # hanging constraints, quality diagnostics, boundary projection

    def constraint_set(self):
        v = self.view()
        rows = {}
        for w in sorted(v.hanging):
            a, b = v.hanging[w]
            if a in v.hanging or b in v.hanging:
                raise MeshError(
                    f"unsupported nesting: carrier edge of hanging vertex {w} "
                    "has a hanging endpoint"
                )
            rows[w] = [(a, 0.5), (b, 0.5)]
        return ConstraintSet(rows)

    def delaunay_report(self, tol=1e-12):
        v = self.view()
        if v.hanging:
            raise MeshError("delaunay report requires a conforming mesh")
        flagged = []
        cells = set()
        # conforming interior facets only (c2 >= 0)
        for (a, b), (ca, cb) in zip(v.fint_v, v.fint_c):
            total = 0.0
            for cpos in (ca, cb):
                tri = v.tris[cpos]
                (c,) = [int(t) for t in tri if t != a and t != b]
                u = v.X[a] - v.X[c]
                w = v.X[b] - v.X[c]
                total += math.atan2(abs(u[0] * w[1] - u[1] * w[0]), float(u @ w))
            if total > math.pi + tol:
                flagged.append((int(a), int(b)))
                cells.add(int(v.acells[ca]))
                cells.add(int(v.acells[cb]))
        return DelaunayReport(len(flagged), flagged, cells)

    def project_boundary(self, curve):
        """Attach a curved-boundary descriptor and project its vertices.

        Boundary facets whose endpoints already lie on the curve are flagged;
        every vertex created on a flagged facet during later refinement is
        projected radially as well.
        """
        self._assert_mutable()
        self.curve = curve
        for key, (tag, _) in list(self._bfacet.items()):
            a, b = key
            if all(self._on_curve[p] or curve.on_curve(*self._x[p]) for p in (a, b)):
                self._bfacet[key] = (tag, True)
                for p in (a, b):
                    if not self._on_curve[p]:
                        self._x[p] = curve.project(*self._x[p])
                        self._on_curve[p] = True
        self._invalidate()
        return self

    # ------------------------------------------------------------------
    # snapshots and checks

    def copy_active(self):
        """Frozen copy holding only the active cells (history dropped)."""
        t = Triangulation.__new__(Triangulation)
        t._x = list(self._x)
        t._vtag = list(self._vtag)
        t._on_curve = list(self._on_curve)
        aids = self.active_cell_ids()
        t._cv = [self._cv[i] for i in aids]
        t._parent = [-1] * len(aids)
        t._children = [None] * len(aids)
        t._origin = [self._origin[i] for i in aids]
        t._removed = [False] * len(aids)
        t._bfacet = dict(self._bfacet)
        t._edge_mid = {}
        t.curve = self.curve
        t.level = self.level
        t.frozen = True
        t._cache = None
        return t

    def validate(self):
        """Run structural invariants; raises MeshError on the first failure."""
        v = self.view()
        if np.any(v.areas <= 0):
            raise MeshError("non-positive cell area")
        for cid in range(len(self._cv)):
            kids = self._children[cid]
            if kids is not None:
                for k in kids:
                    if self._parent[k] != cid:
                        raise MeshError("broken parent link")
        self.constraint_set()
        return True


# ----------------------------------------------------------------------
# module-level operation aliases


def refine_regular(mesh, marked):
    return mesh.refine_regular(marked)


def conforming_closure(mesh):
    return mesh.conforming_closure()


def hanging_constraints(mesh):
    """Constraint coefficients for every hanging vertex of the active mesh."""
    return mesh.constraint_set()


def delaunay_report(mesh):
    return mesh.delaunay_report()


def project_boundary(mesh, curve):
    return mesh.project_boundary(curve)


def unit_square_mesh(diagonal="main", tag="D"):
    """Two-triangle unit square; ``diagonal`` is ``main`` (0,0)-(1,1) or
    ``anti`` (0,1)-(1,0)."""
    coords = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    if diagonal == "main":
        cells = [(0, 1, 2), (0, 2, 3)]
    elif diagonal == "anti":
        cells = [(0, 1, 3), (1, 2, 3)]
    else:
        raise MeshError(f"unknown diagonal {diagonal!r}")
    boundary = [(0, 1, tag), (1, 2, tag), (2, 3, tag), (3, 0, tag)]
    return Triangulation(coords, cells, boundary)
