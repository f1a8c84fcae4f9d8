"""Galerkin P1 assembly in the Neumann form, Dirichlet imposition, error norms.

Assembly runs cell-wise over the non-conforming nodal basis: every cell
contributes to its own three vertices, hanging or not.  Constant coefficients
are integrated exactly; general coefficients use a six-point order-4 rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .mesh import DIRICHLET

__all__ = [
    "AssemblyError",
    "SparseSystem",
    "assemble_galerkin",
    "apply_dirichlet",
    "error_norms",
    "QUAD_ORDER4",
    "QUAD_ORDER6",
]


class AssemblyError(Exception):
    pass


# Dunavant rules in barycentric coordinates; weights sum to one.
QUAD_ORDER4 = (
    np.array(
        [
            [0.108103018168070, 0.445948490915965, 0.445948490915965],
            [0.445948490915965, 0.108103018168070, 0.445948490915965],
            [0.445948490915965, 0.445948490915965, 0.108103018168070],
            [0.816847572980459, 0.091576213509771, 0.091576213509771],
            [0.091576213509771, 0.816847572980459, 0.091576213509771],
            [0.091576213509771, 0.091576213509771, 0.816847572980459],
        ]
    ),
    np.array(
        [
            0.223381589678011,
            0.223381589678011,
            0.223381589678011,
            0.109951743655322,
            0.109951743655322,
            0.109951743655322,
        ]
    ),
)

_d6a = [0.501426509658179, 0.249286745170910, 0.249286745170910]
_d6b = [0.873821971016996, 0.063089014491502, 0.063089014491502]
_d6c = [0.053145049844816, 0.310352451033785, 0.636502499121399]
QUAD_ORDER6 = (
    np.array(
        [
            _d6a,
            [_d6a[1], _d6a[0], _d6a[2]],
            [_d6a[1], _d6a[2], _d6a[0]],
            _d6b,
            [_d6b[1], _d6b[0], _d6b[2]],
            [_d6b[1], _d6b[2], _d6b[0]],
            _d6c,
            [_d6c[0], _d6c[2], _d6c[1]],
            [_d6c[1], _d6c[0], _d6c[2]],
            [_d6c[1], _d6c[2], _d6c[0]],
            [_d6c[2], _d6c[0], _d6c[1]],
            [_d6c[2], _d6c[1], _d6c[0]],
        ]
    ),
    np.array(
        [0.116786275726379] * 3
        + [0.050844906370207] * 3
        + [0.082851075618374] * 6
    ),
)

_GAUSS3_1D = (
    np.array([0.5 - np.sqrt(0.15), 0.5, 0.5 + np.sqrt(0.15)]),
    np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0]),
)


@dataclass
class SparseSystem:
    """Square sparse system with the vertex id carried by each row/column."""

    matrix: sparse.csr_matrix
    rhs: np.ndarray
    vertex_ids: np.ndarray

    @property
    def n(self):
        return self.rhs.shape[0]


def _cell_gradients(X, tris, areas):
    """Gradients of the three nodal basis functions per cell, shape (m, 3, 2)."""
    p = X[tris]  # (m, 3, 2)
    g = np.empty((tris.shape[0], 3, 2))
    for k in range(3):
        a = p[:, (k + 1) % 3, :]
        b = p[:, (k + 2) % 3, :]
        g[:, k, 0] = a[:, 1] - b[:, 1]
        g[:, k, 1] = b[:, 0] - a[:, 0]
    g /= (2.0 * areas)[:, None, None]
    return g


def _eval_coeff(c, x, y):
    if callable(c):
        return np.asarray(c(x, y), dtype=float)
    return np.full(x.shape, float(c))


def assemble_galerkin(mesh, spec):
    """Stiffness matrix and right-hand side of the Neumann-form Galerkin
    system over all vertices (no Dirichlet rows modified)."""
    v = mesh.view()
    X, tris, areas = v.X, v.tris, v.areas
    m = tris.shape[0]
    nv = X.shape[0]
    tiny = float(areas.min())
    if tiny < 1e-14:
        bad = int(v.acells[int(np.argmin(areas))])
        raise AssemblyError(f"degenerate cell {bad} with area {tiny}")

    grads = _cell_gradients(X, tris, areas)
    eps = spec.epsilon
    local = np.zeros((m, 3, 3))

    # diffusion: eps * area * grad_i . grad_j  (exact for constant eps)
    local += eps * areas[:, None, None] * np.einsum("mkd,mld->mkl", grads, grads)

    lam, w = QUAD_ORDER4
    qx = qy = None
    need_quad = callable(spec.b) or callable(spec.c) or callable(spec.f)
    if need_quad:
        pts = np.einsum("qk,mkd->qmd", lam, X[tris])  # (q, m, 2)
        qx, qy = pts[..., 0], pts[..., 1]

    # convection (b . grad u_j, u_i)
    if callable(spec.b):
        bq = np.asarray(spec.b(qx, qy), dtype=float)  # (2, q, m) or similar
        bq = np.moveaxis(np.asarray(bq), 0, -1)  # (q, m, 2)
        s = np.einsum("qmd,mld->qml", bq, grads)
        local += areas[:, None, None] * np.einsum("q,qk,qml->mkl", w, lam, s)
    else:
        b = np.asarray(spec.b, dtype=float)
        s = grads @ b  # (m, 3)
        local += (areas / 3.0)[:, None, None] * s[:, None, :]

    # reaction (c u_j, u_i)
    if callable(spec.c):
        cq = _eval_coeff(spec.c, qx, qy)  # (q, m)
        local += areas[:, None, None] * np.einsum("qm,q,qk,ql->mkl", cq, w, lam, lam)
    else:
        c = float(spec.c)
        if c != 0.0:
            mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
            local += c * areas[:, None, None] * mass[None, :, :]

    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    A = sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(nv, nv))
    A.sum_duplicates()
    A.sort_indices()

    rhs = np.zeros(nv)
    if callable(spec.f):
        if qx is None:
            pts = np.einsum("qk,mkd->qmd", lam, X[tris])
            qx, qy = pts[..., 0], pts[..., 1]
        fq = _eval_coeff(spec.f, qx, qy)
        contrib = areas[:, None] * np.einsum("qm,q,qk->mk", fq, w, lam)
        np.add.at(rhs, tris.ravel(), contrib.ravel())
    else:
        fconst = float(spec.f)
        if fconst != 0.0:
            np.add.at(rhs, tris.ravel(), np.repeat(fconst * areas / 3.0, 3))

    # Neumann data (g, v) over Neumann facets
    if spec.g is not None and v.fneu_v.shape[0] > 0:
        a = v.fneu_v[:, 0]
        b_ = v.fneu_v[:, 1]
        pa, pb = X[a], X[b_]
        h = np.hypot(*(pb - pa).T)
        if callable(spec.g):
            t, wt = _GAUSS3_1D
            acc_a = np.zeros(a.shape[0])
            acc_b = np.zeros(a.shape[0])
            for tq, wq in zip(t, wt):
                px = pa[:, 0] + tq * (pb[:, 0] - pa[:, 0])
                py = pa[:, 1] + tq * (pb[:, 1] - pa[:, 1])
                gq = _eval_coeff(spec.g, px, py)
                acc_a += wq * gq * (1.0 - tq)
                acc_b += wq * gq * tq
            np.add.at(rhs, a, h * acc_a)
            np.add.at(rhs, b_, h * acc_b)
        else:
            gconst = float(spec.g)
            if gconst != 0.0:
                np.add.at(rhs, a, gconst * h / 2.0)
                np.add.at(rhs, b_, gconst * h / 2.0)

    return SparseSystem(A, rhs, np.arange(nv))


def dirichlet_info(mesh, spec, vertex_ids):
    """Positions (within ``vertex_ids``) and boundary values of Dirichlet rows."""
    tags = mesh.vertex_tags()[vertex_ids]
    idx = np.flatnonzero(tags == DIRICHLET)
    X = mesh.coords()[np.asarray(vertex_ids)[idx]]
    if idx.size:
        vals = np.asarray(spec.u_b(X[:, 0], X[:, 1]), dtype=float)
    else:
        vals = np.zeros(0)
    return idx, vals


def apply_dirichlet(system, mesh, spec):
    """Replace every Dirichlet row by the identity row with rhs ``u_b(x_i)``."""
    from .sparsetools import impose_unit_rows

    idx, vals = dirichlet_info(mesh, spec, system.vertex_ids)
    if idx.size == 0:
        return SparseSystem(system.matrix.copy(), system.rhs.copy(), system.vertex_ids)
    A = impose_unit_rows(system.matrix, idx)
    rhs = system.rhs.copy()
    rhs[idx] = vals
    return SparseSystem(A, rhs, system.vertex_ids)


def error_norms(values, mesh, spec, quad=QUAD_ORDER6):
    """L2 and H1-seminorm errors of a vertex-valued P1 function against the
    problem's exact solution."""
    if spec.exact is None:
        raise ValueError("error norms require an exact solution")
    v = mesh.view()
    X, tris, areas = v.X, v.tris, v.areas
    lam, w = quad
    pts = np.einsum("qk,mkd->qmd", lam, X[tris])
    qx, qy = pts[..., 0], pts[..., 1]
    uh_nodal = np.asarray(values, dtype=float)[tris]  # (m, 3)
    uh = np.einsum("qk,mk->qm", lam, uh_nodal)
    u = np.asarray(spec.exact(qx, qy), dtype=float)
    l2sq = float(np.einsum("q,qm,m->", w, (u - uh) ** 2, areas))

    grads = _cell_gradients(X, tris, areas)
    gh = np.einsum("mk,mkd->md", uh_nodal, grads)  # constant per cell
    gx, gy = spec.exact.gradient(qx, qy)
    dx = np.asarray(gx, dtype=float) - gh[None, :, 0]
    dy = np.asarray(gy, dtype=float) - gh[None, :, 1]
    h1sq = float(np.einsum("q,qm,m->", w, dx**2 + dy**2, areas))
    return {"l2": np.sqrt(l2sq), "h1_semi": np.sqrt(h1sq)}
