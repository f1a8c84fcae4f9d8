"""Artificial diffusion and the three algebraic limiters (Kuzmin, BJK, MUAS).

All sweeps are vectorized over the stored entries of a structurally symmetric
CSR pattern.  The entry permutation pairing (i, j) with (j, i) is computed
once per pattern and cached, since the pattern is fixed during a nonlinear
solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial import ConvexHull, QhullError

from .sparsetools import row_indices, transpose_permutation, with_symmetric_pattern

__all__ = [
    "StabilizationError",
    "ArtificialDiffusion",
    "LimiterField",
    "BjkGeometry",
    "Stabilizer",
    "artificial_diffusion",
    "bjk_geometry",
    "compute_limiters",
    "assemble_stabilization",
    "nonlinear_residual",
]

_PZERO = 1e-300

METHODS = ("kuzmin", "bjk", "muas")


class StabilizationError(Exception):
    pass


@dataclass
class ArtificialDiffusion:
    """Symmetric artificial diffusion matrix aligned with the source pattern."""

    matrix: sparse.csr_matrix


@dataclass
class LimiterField:
    """Per-entry limiter values aligned with the matrix pattern."""

    alpha: np.ndarray
    method: str
    indptr: np.ndarray
    indices: np.ndarray

    def matrix(self):
        return sparse.csr_matrix(
            (self.alpha, self.indices, self.indptr),
            shape=(len(self.indptr) - 1,) * 2,
        )


@dataclass
class BjkGeometry:
    """Per-node linearity-preservation factors gamma_i for the BJK limiter."""

    gamma: np.ndarray


def _row_sums(vals, rows, n):
    return np.bincount(rows, weights=vals, minlength=n)


class Stabilizer:
    """Limiter/stabilization context bound to one matrix pattern.

    ``A`` must have a structurally symmetric pattern with every diagonal
    stored (see :func:`stabfem.sparsetools.with_symmetric_pattern`).
    """

    def __init__(self, method, A, dirichlet=None, coords=None, geometry=None):
        if method not in METHODS:
            raise StabilizationError(f"unknown method {method!r}")
        self.method = method
        A = sparse.csr_matrix(A)
        A.sum_duplicates()
        A.sort_indices()
        if np.any(np.diff(A.indptr) == 0):
            raise StabilizationError("matrix has empty rows; symmetrize the pattern")
        self.A = A
        self.n = A.shape[0]
        self.rows = row_indices(A)
        self.cols = A.indices
        self.perm = transpose_permutation(A)
        self.offdiag = self.rows != self.cols
        self.dirichlet = np.zeros(self.n, dtype=bool)
        if dirichlet is not None and len(dirichlet):
            self.dirichlet[np.asarray(dirichlet, dtype=np.int64)] = True
        self.a = A.data
        self.a_t = A.data[self.perm]
        d_off = -np.maximum(np.maximum(self.a, 0.0), self.a_t)
        d_off[~self.offdiag] = 0.0
        d_diag = -_row_sums(d_off, self.rows, self.n)
        self.d = d_off + np.where(self.offdiag, 0.0, d_diag[self.rows])
        self.D = sparse.csr_matrix((self.d, A.indices, A.indptr), shape=A.shape)
        self._coords = None if coords is None else np.asarray(coords, dtype=float)
        self.geometry = geometry

    # -- helpers -------------------------------------------------------

    def _ratio(self, Q, P):
        R = np.ones(self.n)
        ok = np.abs(P) > _PZERO
        R[ok] = np.minimum(1.0, Q[ok] / P[ok])
        R[self.dirichlet] = 1.0
        return R

    def _alpha_from_rplus_rminus(self, f, Rp, Rm):
        a = np.ones_like(f)
        pos = f > 0.0
        neg = f < 0.0
        a[pos] = Rp[self.rows[pos]]
        a[neg] = Rm[self.rows[neg]]
        return a

    # -- limiters ------------------------------------------------------

    def alpha(self, U):
        U = np.asarray(U, dtype=float)
        if U.shape[0] != self.n:
            raise StabilizationError("solution vector length mismatch")
        if self.method == "kuzmin":
            return self._alpha_kuzmin(U)
        if self.method == "bjk":
            return self._alpha_bjk(U)
        return self._alpha_muas(U)

    def _alpha_kuzmin(self, U):
        du = U[self.cols] - U[self.rows]
        f = self.d * du
        f[~self.offdiag] = 0.0
        # pair ownership: a_ji < a_ij, ties resolved to the i < j side
        own = (self.a_t < self.a) | (
            (self.a_t == self.a) & (self.rows < self.cols)
        )
        fo = np.where(own, f, 0.0)
        Pp = _row_sums(np.maximum(fo, 0.0), self.rows, self.n)
        Pm = _row_sums(np.minimum(fo, 0.0), self.rows, self.n)
        Qp = -_row_sums(np.minimum(f, 0.0), self.rows, self.n)
        Qm = -_row_sums(np.maximum(f, 0.0), self.rows, self.n)
        Rp = self._ratio(Qp, Pp)
        Rm = self._ratio(Qm, Pm)
        a_own = self._alpha_from_rplus_rminus(f, Rp, Rm)
        alpha = np.where(own, a_own, a_own[self.perm])
        alpha[~self.offdiag] = 1.0
        return alpha

    def _bjk_geometry(self):
        if self.geometry is None:
            if self._coords is None:
                raise StabilizationError("bjk requires nodal coordinates or geometry")
            self.geometry = bjk_geometry(
                self.A,
                self._coords,
                skip=np.flatnonzero(self.dirichlet),
                degenerate="inf",
            )
        return self.geometry

    def _alpha_bjk(self, U):
        du = U[self.cols] - U[self.rows]
        f = self.d * du
        f[~self.offdiag] = 0.0
        Pp = _row_sums(np.maximum(f, 0.0), self.rows, self.n)
        Pm = _row_sums(np.minimum(f, 0.0), self.rows, self.n)
        umax = np.maximum.reduceat(U[self.cols], self.A.indptr[:-1])
        umin = np.minimum.reduceat(U[self.cols], self.A.indptr[:-1])
        umax = np.maximum(umax, U)
        umin = np.minimum(umin, U)
        s = _row_sums(np.where(self.offdiag, self.d, 0.0), self.rows, self.n)
        gamma = self._bjk_geometry().gamma
        # gamma may be inf at degenerate hulls; avoid eager inf * 0 products
        q = np.zeros(self.n)
        nz = s != 0.0
        q[nz] = gamma[nz] * s[nz]
        Qp = np.zeros(self.n)
        Qm = np.zeros(self.n)
        mp = U != umax
        mm = U != umin
        Qp[mp] = q[mp] * (U[mp] - umax[mp])
        Qm[mm] = q[mm] * (U[mm] - umin[mm])
        Rp = self._ratio(Qp, Pp)
        Rm = self._ratio(Qm, Pm)
        abar = self._alpha_from_rplus_rminus(f, Rp, Rm)
        alpha = np.minimum(abar, abar[self.perm])
        alpha[~self.offdiag] = 1.0
        return alpha

    def _alpha_muas(self, U):
        du = U[self.cols] - U[self.rows]
        dv = -du  # u_i - u_j
        apos = np.where((self.a > 0.0) & self.offdiag, self.a, 0.0)
        Pp = _row_sums(apos * np.maximum(dv, 0.0), self.rows, self.n)
        Pm = _row_sums(apos * np.minimum(dv, 0.0), self.rows, self.n)
        mx = np.maximum(np.abs(self.a), self.a_t)
        mx = np.where(self.offdiag, mx, 0.0)
        Qp = _row_sums(mx * np.maximum(du, 0.0), self.rows, self.n)
        Qm = _row_sums(mx * np.minimum(du, 0.0), self.rows, self.n)
        Rp = self._ratio(Qp, Pp)
        Rm = self._ratio(Qm, Pm)
        alpha = np.ones_like(du)
        hi = dv > 0.0  # u_i > u_j
        lo = dv < 0.0
        alpha[hi] = Rp[self.rows[hi]]
        alpha[lo] = Rm[self.rows[lo]]
        alpha[~self.offdiag] = 1.0
        return alpha

    # -- stabilization matrix -------------------------------------------

    def matrix_from_alpha(self, alpha):
        if self.method == "muas":
            g = (1.0 - alpha) * self.a
            b_off = -np.maximum(np.maximum(g, 0.0), g[self.perm])
        else:
            b_off = (1.0 - alpha) * self.d
        b_off = np.where(self.offdiag, b_off, 0.0)
        b_diag = -_row_sums(b_off, self.rows, self.n)
        data = b_off + np.where(self.offdiag, 0.0, b_diag[self.rows])
        return sparse.csr_matrix((data, self.A.indices, self.A.indptr), shape=self.A.shape)

    def matrix(self, U):
        return self.matrix_from_alpha(self.alpha(U))

    def limiter_field(self, U):
        return LimiterField(self.alpha(U), self.method, self.A.indptr, self.A.indices)


# ----------------------------------------------------------------------
# free functions mirroring the operation contracts


def artificial_diffusion(A):
    """d_ij = -max(a_ij, 0, a_ji) off the diagonal; zero row sums."""
    A = with_symmetric_pattern(A)
    rows = row_indices(A)
    perm = transpose_permutation(A)
    off = rows != A.indices
    d_off = -np.maximum(np.maximum(A.data, 0.0), A.data[perm])
    d_off[~off] = 0.0
    d_diag = -_row_sums(d_off, rows, A.shape[0])
    data = d_off + np.where(off, 0.0, d_diag[rows])
    return ArtificialDiffusion(
        sparse.csr_matrix((data, A.indices, A.indptr), shape=A.shape)
    )


def bjk_geometry(A, coords, skip=None, degenerate="raise"):
    """Linearity-preservation factors from the row patterns of ``A``.

    For each node i, the neighbor set N_i consists of the column indices of
    row i; gamma_i is the largest neighbor distance divided by the distance
    from x_i to the boundary of the neighbors' convex hull.  Nodes listed in
    ``skip`` are not processed.  A node on or outside its hull raises by
    default (``degenerate='raise'``) or receives ``gamma=inf``
    (``degenerate='inf'``), which makes its R bounds inactive.
    """
    A = sparse.csr_matrix(A)
    A.sort_indices()
    coords = np.asarray(coords, dtype=float)
    n = A.shape[0]
    gamma = np.full(n, np.inf)
    skip_mask = np.zeros(n, dtype=bool)
    if skip is not None and len(skip):
        skip_mask[np.asarray(skip, dtype=np.int64)] = True
    for i in range(n):
        if skip_mask[i]:
            continue
        nb = A.indices[A.indptr[i] : A.indptr[i + 1]]
        nb = nb[nb != i]
        if nb.size < 3:
            if degenerate == "raise":
                raise StabilizationError(f"degenerate neighbor hull at node {i}")
            continue
        pts = coords[nb]
        try:
            hull = ConvexHull(pts)
        except QhullError:
            if degenerate == "raise":
                raise StabilizationError(f"degenerate neighbor hull at node {i}")
            continue
        p = coords[i]
        # hull.equations rows are unit normals with offsets: n.x + off <= 0 inside
        margins = hull.equations[:, :2] @ p + hull.equations[:, 2]
        dist = -float(margins.max())
        if dist <= 1e-14:
            if degenerate == "raise":
                raise StabilizationError(
                    f"degenerate neighbor hull at node {i}: node on or outside hull"
                )
            continue
        hv = pts[hull.vertices]
        dmax = float(np.hypot(hv[:, 0] - p[0], hv[:, 1] - p[1]).max())
        gamma[i] = dmax / dist
    return BjkGeometry(gamma)


def compute_limiters(method, A, D, U, geom=None, dirichlet=None):
    """One-shot limiter evaluation; ``D`` must match Eq.-style artificial
    diffusion for the given ``A`` (it is recomputed internally from ``A``)."""
    if method == "bjk" and geom is None:
        raise StabilizationError("bjk limiter requires geometry data")
    stab = Stabilizer(method, A, dirichlet=dirichlet, geometry=geom)
    return stab.limiter_field(U)


def assemble_stabilization(method, A, D, alpha):
    """Stabilization matrix B from a limiter field."""
    stab = Stabilizer(method, A)
    field = alpha if isinstance(alpha, np.ndarray) else alpha.alpha
    return stab.matrix_from_alpha(field)


def nonlinear_residual(A, B, U, b):
    """Euclidean norm of ``(A + B) U - b``."""
    U = np.asarray(U, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(A @ U + B @ U - b))
