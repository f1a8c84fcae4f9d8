"""Solve-estimate-mark-refine loop for both grid modes.

Each level runs: assemble (Neumann form), hanging-vertex transforms, limiter
setup on the reduced system, Dirichlet imposition inside the fixed-point
solver, estimation, metrics, marking, refinement.  Conforming mode re-marks
closure parents, removes all closure cells, refines regularly and closes the
grid again; hanging mode refines regularly and relies on the one-hanging-
vertex-per-edge cascade.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import bench
from .assembly import assemble_galerkin, dirichlet_info, error_norms
from .constraints import (
    expand_solution,
    reduce_nonhanging,
    to_conforming_ansatz,
    to_conforming_test,
)
from .estimator import estimate, localize_for_marking
from .mesh import DIRICHLET
from .solver import fixed_point_solve
from .sparsetools import row_indices, with_symmetric_pattern
from .stabilization import Stabilizer

__all__ = ["AdaptRecord", "mark_cells", "adaptive_loop", "solve_on_mesh"]


@dataclass
class AdaptRecord:
    level: int
    metrics: bench.RunMetrics
    mesh: object = None  # frozen snapshot when keep_meshes=True
    values: object = None  # expanded vertex values
    marked_centroids: object = None
    report: object = None


def mark_cells(indicators, theta=0.5):
    """Maximum strategy: mark every cell whose indicator reaches ``theta``
    times the largest one.  All-zero indicators give an empty mark set."""
    indicators = np.asarray(indicators, dtype=float)
    if indicators.size == 0:
        return np.zeros(0, dtype=np.int64)
    top = indicators.max()
    if top <= 0.0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(indicators >= theta * top)


def _full_id_matrix(reduced, vertex_ids, nv):
    coo = sparse.csr_matrix(reduced).tocoo()
    ids = np.asarray(vertex_ids)
    return sparse.csr_matrix(
        (coo.data, (ids[coo.row], ids[coo.col])), shape=(nv, nv)
    )


def _hanging_gap(mesh, values, cs, rng):
    """Largest two-sided mismatch of the P1 function across constrained edges,
    sampled at three random points per edge."""
    if not cs:
        return 0.0
    X = mesh.coords()
    gap = 0.0
    for q in sorted(cs.rows):
        (p, wp), (r, wr) = cs.rows[q]
        for t in rng.uniform(0.05, 0.95, size=3):
            # coarse side: linear along the carrier edge (p, r)
            coarse = (1.0 - t) * values[p] + t * values[r]
            # fine side: linear on the matching sub-edge
            if t <= 0.5:
                s = 2.0 * t
                fine = (1.0 - s) * values[p] + s * values[q]
            else:
                s = 2.0 * t - 1.0
                fine = (1.0 - s) * values[q] + s * values[r]
            gap = max(gap, abs(coarse - fine))
    return gap


def solve_on_mesh(spec, mesh, method, eps_thresh, solver_mode="direct", u0=None):
    """Assemble, transform, and solve one nonlinear problem on the active mesh.

    Returns ``(values, report, context)`` where values are expanded vertex
    values and context carries the pieces needed for estimation.
    """
    nv = mesh.n_vertices
    system = assemble_galerkin(mesh, spec)
    cs = mesh.constraint_set()
    sys_t = to_conforming_test(system, cs)
    sys_a = to_conforming_ansatz(sys_t, cs)
    red = reduce_nonhanging(sys_a, cs)
    A = with_symmetric_pattern(red.matrix)
    dir_idx, dir_vals = dirichlet_info(mesh, spec, red.vertex_ids)
    coords_red = mesh.coords()[np.asarray(red.vertex_ids)]
    stab = Stabilizer(method, A, dirichlet=dir_idx, coords=coords_red)
    U_red, report = fixed_point_solve(
        A,
        stab.D,
        red.rhs,
        stab,
        dir_idx,
        dir_vals,
        eps_thresh=eps_thresh,
        mode=solver_mode,
        dof=nv,
        u0=u0,
    )
    values = expand_solution(U_red, cs, red.vertex_ids, nv)
    alpha = stab.alpha(U_red)
    rows = row_indices(A)
    offdiag = rows != A.indices
    # off-diagonal bound of the fixed-point left operator A + D
    left = A.data + stab.d
    offdiag_max = float(left[offdiag].max()) if np.any(offdiag) else 0.0
    ctx = {
        "A": A,
        "stab": stab,
        "alpha": alpha,
        "cs": cs,
        "reduced": red,
        "U_red": U_red,
        "dir_idx": dir_idx,
        "offdiag_max": offdiag_max,
    }
    return values, report, ctx


def adaptive_loop(
    spec,
    mesh,
    schedule,
    method,
    grid_mode,
    max_dof,
    theta=0.5,
    eps_thresh=None,
    solver_mode="direct",
    keep_meshes=False,
    verbose=False,
    vtk_dir=None,
):
    """Run the adaptive study; returns a list of :class:`AdaptRecord`."""
    if grid_mode not in ("conforming", "hanging"):
        raise ValueError(f"unknown grid mode {grid_mode!r}")
    if eps_thresh is None:
        eps_thresh = schedule.eps_thresh
    variant = "muas_indicator" if method == "muas" else "afc_energy"

    for _ in range(schedule.pre_uniform):
        mesh.refine_uniform()

    records = []
    rng = np.random.default_rng(20240 + mesh.level)
    while True:
        level = mesh.level
        nv = mesh.n_vertices
        values, report, ctx = solve_on_mesh(
            spec, mesh, method, eps_thresh, solver_mode=solver_mode
        )
        red, stab, alpha = ctx["reduced"], ctx["stab"], ctx["alpha"]
        alpha_full = _full_id_matrix(
            sparse.csr_matrix((alpha, stab.A.indices, stab.A.indptr), shape=stab.A.shape),
            red.vertex_ids,
            nv,
        )
        d_full = _full_id_matrix(stab.D, red.vertex_ids, nv)
        ind = estimate(
            mesh, values, spec, variant=variant, alpha_mat=alpha_full, d_mat=d_full
        )
        local = localize_for_marking(ind)

        metrics = bench.RunMetrics(level=level, dof=nv)
        metrics.eta = ind.eta
        metrics.eta_sq = ind.eta_sq
        metrics.eta_local_sum = float(local.sum())
        metrics.iterations = report.iterations
        metrics.rejections = report.rejections
        metrics.converged = report.converged
        metrics.residual = report.final_residual
        metrics.threshold = report.threshold
        metrics.offdiag_max = ctx["offdiag_max"]
        if spec.exact is not None:
            err = error_norms(values, mesh, spec)
            metrics.l2 = err["l2"]
            metrics.h1_semi = err["h1_semi"]
        if spec.osc_bounds is not None:
            metrics.osc_max = bench.osc_max(values, spec.osc_bounds)
        if spec.smear_cut is not None:
            s, vals = bench.sample_on_cut(mesh, values, spec.smear_cut)
            (c1, c2), monotone = bench.layer_crossings(s, vals)
            metrics.smear_int = (
                float("inf") if (np.isnan(c1) or np.isnan(c2)) else abs(c2 - c1)
            )
            metrics.smear_nonmonotone = not monotone
        if not mesh.view().hanging:
            # defined whenever the current grid happens to be conforming, so
            # the two grid modes agree row-for-row through the uniform phase
            metrics.non_delaunay = mesh.delaunay_report().count
        if grid_mode == "hanging":
            metrics.hanging_gap = _hanging_gap(mesh, values, ctx["cs"], rng)

        # classic maximum strategy on eta_K, i.e. the square roots of the
        # localized squared shares
        marked = (
            np.arange(mesh.view().tris.shape[0])
            if level < schedule.uniform_until
            else mark_cells(np.sqrt(local), theta)
        )
        v = mesh.view()
        cents = v.X[v.tris[marked]].mean(axis=1) if marked.size else np.zeros((0, 2))

        record = AdaptRecord(
            level=level,
            metrics=metrics,
            mesh=mesh.copy_active() if keep_meshes else None,
            values=values,
            marked_centroids=cents,
            report=report,
        )
        records.append(record)
        if verbose:
            print(
                f"level {level:3d} dof {nv:7d} iters {report.iterations:5d}"
                f" rej {report.rejections:4d} res {report.final_residual:.3e}"
                f" eta {ind.eta:.3e}"
                + (f" osc {metrics.osc_max:.2e}" if metrics.osc_max is not None else "")
            )
        if vtk_dir is not None:
            from pathlib import Path

            from .io import write_vtk

            out = Path(vtk_dir)
            out.mkdir(parents=True, exist_ok=True)
            write_vtk(out / f"solution_{level}.vtk", mesh, point_data={"u": values})
            write_vtk(
                out / f"indicators_{level}.vtk", mesh, cell_data={"indicator": local}
            )

        if nv >= max_dof or marked.size == 0:
            break

        marked_ids = [int(v.acells[k]) for k in marked]
        if grid_mode == "conforming":
            parents = mesh.closure_parents(marked_ids)
            mesh.remove_closure_cells()
            active = set(mesh.active_cell_ids())
            mesh.refine_regular(sorted(parents & active))
            mesh.conforming_closure()
        else:
            mesh.refine_regular(marked_ids)
    return records
