"""Hanging-vertex transforms of an assembled system.

The assembled Neumann-form system lives on the non-conforming nodal basis.
Continuity is restored in two steps: first to conforming test functions
(hanging rows folded into their carrier rows, then replaced by the constraint
relation), then to conforming ansatz functions (hanging columns eliminated by
inserting the constraint relation).  Limiters are computed on the submatrix of
non-hanging rows and columns.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .assembly import SparseSystem

__all__ = [
    "ConstraintError",
    "to_conforming_test",
    "to_conforming_ansatz",
    "reduce_nonhanging",
    "expand_solution",
]


class ConstraintError(Exception):
    pass


def _constraint_arrays(cs, n):
    qs, ps, ws = [], [], []
    for q in sorted(cs.rows):
        if not (0 <= q < n):
            raise ConstraintError(f"constraint references unknown vertex {q}")
        for p, w in cs.rows[q]:
            if not (0 <= p < n):
                raise ConstraintError(f"constraint references unknown vertex {p}")
            qs.append(q)
            ps.append(p)
            ws.append(float(w))
    return (
        np.array(qs, dtype=np.int64),
        np.array(ps, dtype=np.int64),
        np.array(ws),
    )


def _constraint_rows_matrix(cs, n):
    """Rows q of the matrix ``e_q - sum_p a_qp e_p`` for each hanging q."""
    qs, ps, ws = _constraint_arrays(cs, n)
    hq = np.array(sorted(cs.rows), dtype=np.int64)
    ri = np.concatenate([hq, qs])
    ci = np.concatenate([hq, ps])
    vals = np.concatenate([np.ones(hq.size), -ws])
    C = sparse.csr_matrix((vals, (ri, ci)), shape=(n, n))
    C.sum_duplicates()
    return C


def _zero_rows_diag(cs, n):
    keep = np.ones(n)
    keep[list(cs.rows)] = 0.0
    return sparse.diags(keep).tocsr()


def to_conforming_test(system, cs):
    """Fold hanging rows into their carriers and replace them by constraints.

    For each hanging vertex q and carrier coefficient a_qp: row_p gains
    ``a_qp * row_q`` (and rhs alike); afterwards row q becomes the constraint
    relation with zero rhs.
    """
    A = sparse.csr_matrix(system.matrix)
    b = np.asarray(system.rhs, dtype=float).copy()
    if not cs:
        return SparseSystem(A.copy(), b, system.vertex_ids)
    n = A.shape[0]
    qs, ps, ws = _constraint_arrays(cs, n)
    S = sparse.csr_matrix((ws, (ps, qs)), shape=(n, n))
    A1 = (A + S @ A).tocsr()
    b1 = b + S @ b
    Z = _zero_rows_diag(cs, n)
    A1 = (Z @ A1 + _constraint_rows_matrix(cs, n)).tocsr()
    b1[list(cs.rows)] = 0.0
    A1.sum_duplicates()
    A1.sort_indices()
    return SparseSystem(A1, b1, system.vertex_ids)


def to_conforming_ansatz(system, cs):
    """Insert the constraint relations into all non-constraint rows so that
    hanging columns vanish there; constraint rows are kept unchanged."""
    A = sparse.csr_matrix(system.matrix)
    b = np.asarray(system.rhs, dtype=float).copy()
    if not cs:
        return SparseSystem(A.copy(), b, system.vertex_ids)
    n = A.shape[0]
    _validate_test_form(A, b, cs)
    qs, ps, ws = _constraint_arrays(cs, n)
    # column map: entry a_iq spreads a_iq * a_qp to columns p and cancels itself
    hq = np.array(sorted(cs.rows), dtype=np.int64)
    ri = np.concatenate([qs, hq])
    ci = np.concatenate([ps, hq])
    vals = np.concatenate([ws, -np.ones(hq.size)])
    T = sparse.csr_matrix((vals, (ri, ci)), shape=(n, n))
    Z = _zero_rows_diag(cs, n)
    A2 = (A + (Z @ A) @ T).tocsr()
    A2.sum_duplicates()
    A2.sort_indices()
    return SparseSystem(A2, b, system.vertex_ids)


def _validate_test_form(A, b, cs):
    n = A.shape[0]
    C = _constraint_rows_matrix(cs, n)
    hq = sorted(cs.rows)
    diff = (A[hq] - C[hq]).toarray()
    scale = max(1.0, float(abs(A).max()))
    if np.abs(diff).max() > 1e-12 * scale or np.abs(b[hq]).max() > 1e-12 * scale:
        raise ConstraintError(
            "system is not in conforming-test form: constraint rows differ "
            "from the hanging-vertex relations"
        )


def reduce_nonhanging(system, cs):
    """Drop hanging rows and columns; the returned system carries the original
    vertex id of each remaining row for re-expansion."""
    A = sparse.csr_matrix(system.matrix)
    n = A.shape[0]
    if not cs:
        return SparseSystem(A.copy(), np.asarray(system.rhs, float).copy(),
                            np.asarray(system.vertex_ids))
    keep = np.setdiff1d(np.arange(n), np.array(sorted(cs.rows)))
    Ar = A[keep][:, keep].tocsr()
    Ar.sum_duplicates()
    Ar.sort_indices()
    br = np.asarray(system.rhs, dtype=float)[keep]
    return SparseSystem(Ar, br, np.asarray(system.vertex_ids)[keep])


def expand_solution(u_reduced, cs, vertex_ids, n_vertices):
    """Scatter reduced values to the full vertex set and fill hanging values
    from their constraint rows."""
    full = np.zeros(n_vertices)
    full[np.asarray(vertex_ids)] = np.asarray(u_reduced, dtype=float)
    for q in sorted(cs.rows) if cs else ():
        full[q] = sum(w * full[p] for p, w in cs.rows[q])
    return full
