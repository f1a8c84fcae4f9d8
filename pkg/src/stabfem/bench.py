"""Benchmark metrics (DMP oscillation, layer smearing) and experiment drivers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RunMetrics",
    "CSV_COLUMNS",
    "osc_max",
    "sample_on_cut",
    "layer_crossings",
    "smear_int",
    "run_experiment",
    "write_metrics_csv",
]

CSV_COLUMNS = [
    "level",
    "dof",
    "l2",
    "h1_semi",
    "eta",
    "osc_max",
    "smear_int",
    "iterations",
    "rejections",
    "converged",
    "non_delaunay",
]


@dataclass
class RunMetrics:
    """One row per refinement level; CSV columns first, diagnostics after."""

    level: int
    dof: int
    l2: float | None = None
    h1_semi: float | None = None
    eta: float | None = None
    osc_max: float | None = None
    smear_int: float | None = None
    iterations: int = 0
    rejections: int = 0
    converged: bool = True
    non_delaunay: int | None = None
    # diagnostics outside the CSV schema
    residual: float = 0.0
    threshold: float = 0.0
    offdiag_max: float = 0.0
    hanging_gap: float | None = None
    eta_sq: float | None = None
    eta_local_sum: float | None = None
    smear_nonmonotone: bool = False

    def csv_row(self):
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, bool):
                return "1" if x else "0"
            if isinstance(x, float):
                return "inf" if np.isinf(x) else repr(x)
            return str(x)

        return [fmt(getattr(self, c)) for c in CSV_COLUMNS]


def osc_max(values, bounds):
    """Violation of the global bounds: ``max(u) - hi - min(u) + lo``.

    For admissible bounds (0, 1) this is the classic overshoot measure; P1
    extrema occur at vertices, so vertex values suffice.
    """
    lo, hi = bounds
    values = np.asarray(values, dtype=float)
    return float(values.max() - hi - values.min() + lo)


def sample_on_cut(mesh, values, cut, n=100000):
    """Values of the P1 function at ``n + 1`` equidistant nodes of a cut line.

    ``cut.axis`` is the fixed coordinate (0 for a vertical line x = value,
    1 for a horizontal line y = value); samples run over ``(cut.lo, cut.hi)``
    in the other coordinate.
    """
    v = mesh.view()
    X, tris = v.X, v.tris
    U = np.asarray(values, dtype=float)
    s = np.linspace(cut.lo, cut.hi, n + 1)
    out = np.full(n + 1, np.nan)
    fixed = cut.axis
    run = 1 - fixed
    tol = 1e-12 * max(1.0, abs(cut.hi - cut.lo))

    p = X[tris]  # (m, 3, 2)
    fmin = p[:, :, fixed].min(axis=1)
    fmax = p[:, :, fixed].max(axis=1)
    cand = np.flatnonzero((fmin <= cut.value + tol) & (fmax >= cut.value - tol))
    step = (cut.hi - cut.lo) / n
    for c in cand:
        verts = p[c]
        # clip the cut line against the three half planes of the triangle
        lo_t, hi_t = cut.lo, cut.hi
        ok = True
        for k in range(3):
            a = verts[k]
            b = verts[(k + 1) % 3]
            # inside test: cross(b - a, x - a) >= 0 for CCW triangles
            ex, ey = b - a
            if fixed == 1:
                # point (t, value): cross = ex*(value - ay) - ey*(t - ax)
                c0 = ex * (cut.value - a[1]) + ey * a[0]
                ct = -ey
            else:
                # point (value, t): cross = ex*(t - ay) - ey*(value - ax)
                c0 = -ex * a[1] - ey * (cut.value - a[0])
                ct = ex
            # inequality c0 + ct * t >= 0
            if abs(ct) < 1e-15:
                if c0 < -tol:
                    ok = False
                    break
                continue
            bound = -c0 / ct
            if ct > 0:
                lo_t = max(lo_t, bound)
            else:
                hi_t = min(hi_t, bound)
        if not ok or lo_t > hi_t + tol:
            continue
        i0 = int(np.ceil((lo_t - tol - cut.lo) / step))
        i1 = int(np.floor((hi_t + tol - cut.lo) / step))
        i0 = max(i0, 0)
        i1 = min(i1, n)
        if i1 < i0:
            continue
        # plane coefficients of u_h on the cell: u = a0 + ax x + ay y
        x0, y0 = verts[0]
        g = _plane_gradient(verts, U[tris[c]])
        ts = s[i0 : i1 + 1]
        if fixed == 1:
            vals = U[tris[c][0]] + g[0] * (ts - x0) + g[1] * (cut.value - y0)
        else:
            vals = U[tris[c][0]] + g[0] * (cut.value - x0) + g[1] * (ts - y0)
        out[i0 : i1 + 1] = vals
    if np.any(np.isnan(out)):
        raise ValueError("cut line leaves the mesh; choose a cut inside the domain")
    return s, out


def _plane_gradient(verts, vals):
    d1 = verts[1] - verts[0]
    d2 = verts[2] - verts[0]
    det = d1[0] * d2[1] - d1[1] * d2[0]
    gx = ((vals[1] - vals[0]) * d2[1] - (vals[2] - vals[0]) * d1[1]) / det
    gy = ((vals[2] - vals[0]) * d1[0] - (vals[1] - vals[0]) * d2[0]) / det
    return gx, gy


def layer_crossings(s, vals, thresholds=(0.1, 0.9)):
    """First crossing coordinate of each threshold along the samples (nan if
    never crossed), plus a monotonicity flag for the scanned profile."""
    out = []
    for tau in thresholds:
        d = vals - tau
        hit = np.nan
        exact = np.flatnonzero(d == 0.0)
        cross = np.flatnonzero(d[:-1] * d[1:] < 0.0)
        k_exact = exact[0] if exact.size else np.inf
        k_cross = cross[0] if cross.size else np.inf
        if k_exact <= k_cross and np.isfinite(k_exact):
            hit = s[int(k_exact)]
        elif np.isfinite(k_cross):
            k = int(k_cross)
            hit = s[k] + (s[k + 1] - s[k]) * (tau - vals[k]) / (vals[k + 1] - vals[k])
        out.append(hit)
    dv = np.diff(vals)
    monotone = bool(np.all(dv >= 0.0) or np.all(dv <= 0.0))
    return out, monotone


def smear_int(mesh, values, cut, thresholds=(0.1, 0.9), n=100000):
    """Layer width: distance between the first crossings of the two
    thresholds along the cut (``inf`` when a threshold is never crossed)."""
    s, vals = sample_on_cut(mesh, values, cut, n=n)
    (c1, c2), _ = layer_crossings(s, vals, thresholds)
    if np.isnan(c1) or np.isnan(c2):
        return float("inf")
    return abs(c2 - c1)


def write_metrics_csv(records, path, config=None):
    lines = ["#schema=1"]
    if config:
        lines.append("# " + " ".join(f"{k}={v}" for k, v in sorted(config.items())))
    lines.append(",".join(CSV_COLUMNS))
    for rec in records:
        metrics = rec.metrics if hasattr(rec, "metrics") else rec
        lines.append(",".join(metrics.csv_row()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def run_experiment(
    name,
    method,
    grid_mode,
    max_dof,
    epsilon=None,
    eps_thresh=None,
    theta=0.5,
    solver_mode="direct",
    mesh_path=None,
    keep_meshes=False,
    verbose=False,
    vtk_dir=None,
):
    """Run one adaptive study; returns ``(records, spec)``.

    ``eps_thresh`` defaults to the problem schedule's value (1e-10 for
    boundary_layer and hmm86, 1e-8 for hemker).
    """
    from .adapt import adaptive_loop
    from .problem import builtin_problem

    spec, mesh, schedule = builtin_problem(name, epsilon=epsilon, mesh_path=mesh_path)
    records = adaptive_loop(
        spec,
        mesh,
        schedule,
        method=method,
        grid_mode=grid_mode,
        max_dof=max_dof,
        theta=theta,
        eps_thresh=eps_thresh,
        solver_mode=solver_mode,
        keep_meshes=keep_meshes,
        verbose=verbose,
        vtk_dir=vtk_dir,
    )
    return records, spec
