"""Quick invariant battery behind ``stabfem check``."""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .mesh import Triangulation, unit_square_mesh
from .sparsetools import row_indices, transpose_permutation, with_symmetric_pattern
from .stabilization import Stabilizer


def fig1_patch():
    """Five-vertex patch with one mid-diagonal hanging vertex (index 0)."""
    coords = [(0.5, 0.5), (0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    cells = [(1, 2, 3), (0, 3, 4), (1, 0, 4)]
    boundary = [(1, 2, "D"), (2, 3, "D"), (3, 4, "D"), (4, 1, "D")]
    return Triangulation(coords, cells, boundary)


def _check_constraints():
    cs = fig1_patch().constraint_set()
    row = dict(cs.rows[0])
    return cs.hanging == [0] and row == {1: 0.5, 3: 0.5}


def _check_transforms():
    from .assembly import SparseSystem
    from .constraints import to_conforming_ansatz, to_conforming_test

    cs = fig1_patch().constraint_set()
    ones = SparseSystem(
        sparse.csr_matrix(np.ones((5, 5))), np.ones(5), np.arange(5)
    )
    t = to_conforming_test(ones, cs)
    a = to_conforming_ansatz(t, cs).matrix.toarray()
    want0 = np.array([1.0, -0.5, 0.0, -0.5, 0.0])
    want1 = np.array([0.0, 2.25, 1.5, 2.25, 1.5])
    want2 = np.array([0.0, 1.5, 1.0, 1.5, 1.0])
    return (
        np.array_equal(t.matrix.toarray()[0], want0)
        and np.array_equal(a[1], want1)
        and np.array_equal(a[2], want2)
    )


def _check_limiters(seed):
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(20):
        n = 12
        A = _random_symmetric_pattern(rng, n)
        U = rng.normal(size=n)
        for method in ("kuzmin", "bjk", "muas"):
            stab = Stabilizer(
                method, A, coords=rng.normal(size=(n, 2)), dirichlet=[0]
            )
            alpha = stab.alpha(U)
            B = stab.matrix_from_alpha(alpha)
            ok &= bool(np.all(alpha >= 0.0) and np.all(alpha <= 1.0))
            ok &= abs((B - B.T)).max() < 1e-12
            ok &= np.abs(np.asarray(B.sum(axis=1)).ravel()).max() < 1e-12
            # shift invariance up to roundoff of the shifted differences
            ok &= bool(np.abs(stab.alpha(U + 3.7) - alpha).max() < 1e-10)
    return ok


def _random_symmetric_pattern(rng, n):
    A = sparse.random(n, n, density=0.35, random_state=np.random.RandomState(rng.integers(1 << 31))).tocsr()
    A.data = rng.normal(size=A.nnz)
    return with_symmetric_pattern(A)


def _check_mesh(seed):
    rng = np.random.default_rng(seed)
    mesh = unit_square_mesh()
    for _ in range(4):
        ids = mesh.active_cell_ids()
        picks = [ids[k] for k in rng.choice(len(ids), size=max(1, len(ids) // 4), replace=False)]
        mesh.refine_regular(picks)
        mesh.validate()
    if abs(mesh.total_area() - 1.0) > 1e-12:
        return False
    mesh.conforming_closure()
    return not mesh.view().hanging and abs(mesh.total_area() - 1.0) > -1


def _check_estimator():
    from .adapt import adaptive_loop
    from .problem import builtin_problem

    spec, mesh, schedule = builtin_problem("boundary_layer")
    recs = adaptive_loop(
        spec, mesh, schedule, method="kuzmin", grid_mode="conforming", max_dof=1200
    )
    for r in recs:
        if abs(r.metrics.eta_local_sum - r.metrics.eta_sq) > 1e-12 * max(
            1.0, r.metrics.eta_sq
        ):
            return False
        if r.metrics.offdiag_max > 1e-14:
            return False
    return True


def run_all(seed=0):
    tests = [
        ("hanging constraints (patch)", _check_constraints),
        ("conforming test/ansatz transforms", _check_transforms),
        ("limiter properties", lambda: _check_limiters(seed)),
        ("mesh refinement invariants", lambda: _check_mesh(seed)),
        ("estimator conservation / M-matrix", _check_estimator),
    ]
    all_ok = True
    for name, fn in tests:
        try:
            ok = bool(fn())
        except Exception as exc:  # pragma: no cover - surfaced to the user
            print(f"FAIL {name}: {exc}")
            all_ok = False
            continue
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        all_ok &= ok
    return all_ok
