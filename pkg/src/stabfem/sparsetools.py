"""Small helpers for CSR matrices with structurally symmetric patterns."""

from __future__ import annotations

import numpy as np
from scipy import sparse

__all__ = [
    "row_indices",
    "with_symmetric_pattern",
    "transpose_permutation",
    "impose_unit_rows",
    "get_entries",
]


def row_indices(A):
    """Row index of every stored entry of a canonical CSR matrix."""
    return np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))


def with_symmetric_pattern(A):
    """Copy of ``A`` whose pattern is the union of A, its transpose, and the
    diagonal, with explicit zeros on the added positions.

    Limiter sweeps pair every stored entry (i, j) with (j, i), so the pattern
    must be structurally symmetric and rows must be non-empty.
    """
    A = sparse.csr_matrix(A)
    A.sum_duplicates()
    n = A.shape[0]
    rows = row_indices(A)
    cols = A.indices
    ri = np.concatenate([rows, cols, np.arange(n)])
    ci = np.concatenate([cols, rows, np.arange(n)])
    vals = np.concatenate([A.data, np.zeros(A.nnz + n)])
    out = sparse.csr_matrix((vals, (ri, ci)), shape=A.shape)
    out.sum_duplicates()
    out.sort_indices()
    return out


def transpose_permutation(A):
    """Permutation ``p`` with ``A.data[p][k] == A[j, i]`` for entry k=(i, j).

    Requires a structurally symmetric, canonical pattern.
    """
    A.sum_duplicates()
    A.sort_indices()
    tags = sparse.csr_matrix(
        (np.arange(A.nnz, dtype=np.int64), A.indices, A.indptr), shape=A.shape
    )
    T = tags.transpose().tocsr()
    T.sort_indices()
    if not (
        np.array_equal(T.indptr, A.indptr) and np.array_equal(T.indices, A.indices)
    ):
        raise ValueError("matrix pattern is not structurally symmetric")
    return T.data


def impose_unit_rows(A, idx):
    """Replace the given rows of ``A`` by identity rows (columns untouched)."""
    A = sparse.csr_matrix(A)
    n = A.shape[0]
    keep = np.ones(n)
    keep[idx] = 0.0
    out = sparse.diags(keep).tocsr() @ A
    unit = np.zeros(n)
    unit[idx] = 1.0
    out = (out + sparse.diags(unit)).tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def get_entries(A, I, J):
    """Entries ``A[i, j]`` for paired index arrays (0 where not stored)."""
    I = np.asarray(I, dtype=np.int64)
    J = np.asarray(J, dtype=np.int64)
    if I.size == 0:
        return np.zeros(0)
    return np.asarray(A[I, J]).ravel()
