"""Damped fixed-point solver for the stabilized system and linear solvers.

The nonlinear system ``(A + B(U)) U = b`` is reformulated with the artificial
diffusion matrix D as ``(A + D) U~ = b + (D - B(U)) U`` followed by damping
``U <- omega U~ + (1 - omega) U``.  The left operator is factorized once and
reused; a step is accepted only if it decreases the nonlinear residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, gmres, splu, spsolve_triangular

__all__ = [
    "FactorizationError",
    "IterativeSolveError",
    "SolverDivergedError",
    "SolveReport",
    "LinearSolver",
    "linear_solve",
    "fixed_point_solve",
]

MAX_STEPS = 10000
OMEGA_FLOOR = 1e-4


class FactorizationError(Exception):
    pass


class IterativeSolveError(Exception):
    pass


class SolverDivergedError(Exception):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


@dataclass
class SolveReport:
    iterations: int
    rejections: int
    final_residual: float
    converged: bool
    omega_history: list = field(default_factory=list)
    threshold: float = 0.0
    used_iterative: bool = False


def _ssor_preconditioner(A, omega=1.0):
    A = sparse.csr_matrix(A)
    diag = A.diagonal()
    if np.any(diag == 0.0):
        raise IterativeSolveError("zero diagonal entry; SSOR undefined")
    dw = diag / omega
    lower = sparse.tril(A, k=-1).tocsr() + sparse.diags(dw).tocsr()
    upper = sparse.triu(A, k=1).tocsr() + sparse.diags(dw).tocsr()

    def apply(z):
        t = spsolve_triangular(lower, z, lower=True)
        t = dw * t
        return spsolve_triangular(upper, t, lower=False)

    return LinearOperator(A.shape, matvec=apply)


class LinearSolver:
    """Reusable linear solver: sparse LU (direct) or GMRES+SSOR (iterative)."""

    def __init__(self, matrix, mode="direct"):
        if mode not in ("direct", "iterative"):
            raise ValueError(f"unknown solver mode {mode!r}")
        self.mode = mode
        self.matrix = sparse.csr_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError("operator must be square")
        if mode == "direct":
            try:
                self._lu = splu(self.matrix.tocsc())
            except RuntimeError as exc:
                raise FactorizationError(str(exc)) from exc
        else:
            self._prec = _ssor_preconditioner(self.matrix)

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self.mode == "direct":
            return self._lu.solve(rhs)
        x, info = gmres(
            self.matrix,
            rhs,
            M=self._prec,
            rtol=1e-12,
            atol=0.0,
            restart=50,
            maxiter=40,  # 40 cycles x restart 50 = 2000 inner iterations
        )
        if info != 0:
            raise IterativeSolveError(f"GMRES did not converge (info={info})")
        return x


def linear_solve(matrix, rhs, mode="direct"):
    return LinearSolver(matrix, mode).solve(rhs)


def fixed_point_solve(
    A,
    D,
    b,
    stab,
    dirichlet_idx,
    dirichlet_values,
    eps_thresh=1e-10,
    u0=None,
    max_steps=MAX_STEPS,
    mode="direct",
    dof=None,
):
    """Solve ``(A + B(U)) U = b`` with Dirichlet rows imposed.

    ``A``, ``D`` and ``b`` are in reduced Neumann form; ``stab`` evaluates the
    stabilization matrix B(U) (its limiters already honor the Dirichlet
    convention).  Returns ``(U, SolveReport)``.

    The stopping test is ``res <= eps_thresh * sqrt(dof)`` where ``dof``
    defaults to the system size; a step is accepted only when it reduces the
    residual, otherwise omega is halved (floor 1e-4) and the step retried.
    After three consecutive accepted steps omega is increased by 10 percent
    (capped at 1).
    """
    A = sparse.csr_matrix(A)
    n = A.shape[0]
    b = np.asarray(b, dtype=float)
    dirichlet_idx = np.asarray(dirichlet_idx, dtype=np.int64)
    dirichlet_values = np.asarray(dirichlet_values, dtype=float)
    from .sparsetools import impose_unit_rows

    A_dir = impose_unit_rows(A, dirichlet_idx) if dirichlet_idx.size else A
    b_dir = b.copy()
    b_dir[dirichlet_idx] = dirichlet_values
    L = (A + stab.D).tocsr()
    if dirichlet_idx.size:
        L = impose_unit_rows(L, dirichlet_idx)

    threshold = eps_thresh * np.sqrt(dof if dof is not None else n)

    def residual_of(U, B):
        r = A_dir @ U - b_dir
        s = B @ U
        s[dirichlet_idx] = 0.0
        return float(np.linalg.norm(r + s))

    if u0 is None:
        U = np.zeros(n)
    else:
        U = np.asarray(u0, dtype=float).copy()
    U[dirichlet_idx] = dirichlet_values

    used_iterative = mode == "iterative"
    lin = LinearSolver(L, mode)

    B = stab.matrix(U)
    res = residual_of(U, B)
    omega = 1.0
    iterations = 0
    rejections = 0
    streak = 0
    history = []

    while res > threshold and iterations + rejections < max_steps:
        rhs = b + (stab.D @ U - B @ U)
        rhs[dirichlet_idx] = dirichlet_values
        Ut = lin.solve(rhs)
        if not np.all(np.isfinite(Ut)):
            if lin.mode == "direct":
                # sparse LU can emit nan on nearly singular factors; retry
                # with the preconditioned iterative solver
                lin = LinearSolver(L, "iterative")
                used_iterative = True
                Ut = lin.solve(rhs)
            if not np.all(np.isfinite(Ut)):
                raise SolverDivergedError(
                    f"non-finite iterate at step {iterations + rejections + 1}",
                    step=iterations + rejections + 1,
                )
        Un = omega * Ut + (1.0 - omega) * U
        Bn = stab.matrix(Un)
        resn = residual_of(Un, Bn)
        if resn < res:
            U, B, res = Un, Bn, resn
            iterations += 1
            streak += 1
            history.append(omega)
            if streak >= 3:
                omega = min(1.0, 1.1 * omega)
        else:
            rejections += 1
            streak = 0
            omega = max(OMEGA_FLOOR, omega / 2.0)

    report = SolveReport(
        iterations=iterations,
        rejections=rejections,
        final_residual=res,
        converged=bool(res <= threshold),
        omega_history=history,
        threshold=float(threshold),
        used_iterative=used_iterative,
    )
    return U, report
