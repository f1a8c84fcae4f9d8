"""Residual-based a-posteriori indicator for the stabilized discretization.

The squared indicator is the sum of a cell-residual term, a facet-flux term,
and (for the AFC schemes) an edge term weighted by the unlimited fraction of
the artificial diffusion.  With vanishing reaction lower bound (sigma0 = 0)
every minimum takes its diffusion branch.  On hanging-vertex grids the facet
and edge contributions are evaluated over the sub-facets of the refined side;
sub-edges inherit the limiter value of their carrier pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import QUAD_ORDER4, _cell_gradients, _eval_coeff
from .sparsetools import get_entries

__all__ = [
    "EstimatorError",
    "EstimatorConstants",
    "IndicatorField",
    "estimate",
    "localize_for_marking",
]


class EstimatorError(Exception):
    pass


@dataclass(frozen=True)
class EstimatorConstants:
    c_i: float = 1.0
    c_f: float = 1.0
    c: float = 1.0
    c_inv: float = 1.0
    c_edge_max: float = 1.0

    @property
    def kappa1(self):
        return self.c * self.c_edge_max * (1.0 + (1.0 + self.c_i) ** 2)

    @property
    def kappa2(self):
        return self.c * self.c_inv**2 * self.c_edge_max * (1.0 + (1.0 + self.c_i) ** 2)


@dataclass
class IndicatorField:
    """Squared contributions per cell / facet / edge plus the global value."""

    variant: str
    eta1_sq: np.ndarray
    eta2_sq: np.ndarray
    eta2_cells: np.ndarray  # (F, 2) adjacent cell positions, -1 if none
    eta3_sq: np.ndarray
    eta3_cells: np.ndarray  # (E, 2) adjacent cell positions, -1 if none
    eta: float

    @property
    def eta_sq(self):
        return self.eta**2


def _min_branch(eps_branch, sigma_branch, sigma0):
    if sigma0 > 0.0:
        return np.minimum(eps_branch, sigma_branch)
    return eps_branch


def estimate(
    mesh,
    values,
    spec,
    variant="afc_energy",
    alpha_mat=None,
    d_mat=None,
    constants=EstimatorConstants(),
):
    """Indicator field for a vertex-valued (expanded) discrete solution.

    ``alpha_mat`` and ``d_mat`` are CSR matrices over full vertex ids holding
    the limiter values and artificial-diffusion entries; they are required for
    the ``afc_energy`` variant and ignored by ``muas_indicator`` (which drops
    the edge term).
    """
    if variant not in ("afc_energy", "muas_indicator"):
        raise EstimatorError(f"unknown variant {variant!r}")
    eps = spec.epsilon
    sigma0 = spec.sigma0
    if eps <= 0.0 and sigma0 <= 0.0:
        raise EstimatorError("estimator undefined for eps = 0 with sigma0 = 0")
    if variant == "afc_energy" and (alpha_mat is None or d_mat is None):
        raise EstimatorError("afc_energy variant needs limiter and diffusion data")

    v = mesh.view()
    X, tris, areas = v.X, v.tris, v.areas
    U = np.asarray(values, dtype=float)
    grads = _cell_gradients(X, tris, areas)
    gh = np.einsum("mk,mkd->md", U[tris], grads)  # cellwise-constant gradient

    # cell residual: R_K = f - b . grad(u_h) - c u_h  (Laplacian of P1 is 0)
    lam, w = QUAD_ORDER4
    pts = np.einsum("qk,mkd->qmd", lam, X[tris])
    qx, qy = pts[..., 0], pts[..., 1]
    if callable(spec.b):
        bq = np.moveaxis(np.asarray(spec.b(qx, qy)), 0, -1)
        conv = np.einsum("qmd,md->qm", bq, gh)
    else:
        bvec = np.asarray(spec.b, dtype=float)
        conv = (gh @ bvec)[None, :]
    cq = _eval_coeff(spec.c, qx, qy) if callable(spec.c) else float(spec.c)
    uh = np.einsum("qk,mk->qm", lam, U[tris])
    fq = _eval_coeff(spec.f, qx, qy) if callable(spec.f) else float(spec.f)
    rk = fq - conv - cq * uh
    rk_sq = areas * np.einsum("q,qm->m", w, rk**2)
    hk = v.diam
    ci2 = 4.0 * constants.c_i**2
    coef1 = _min_branch(ci2 * hk**2 / eps, np.full(hk.shape, ci2 / max(sigma0, 1e-300)), sigma0)
    eta1_sq = coef1 * rk_sq

    # facet residuals
    cf2 = 4.0 * constants.c_f**2
    f_sq = []
    f_cells = []
    if v.fint_v.shape[0]:
        a, b_ = v.fint_v[:, 0], v.fint_v[:, 1]
        ca, cb = v.fint_c[:, 0], v.fint_c[:, 1]
        t = X[b_] - X[a]
        hf = np.hypot(t[:, 0], t[:, 1])
        nrm = np.column_stack([t[:, 1], -t[:, 0]]) / hf[:, None]
        jump = eps * np.einsum("fd,fd->f", gh[ca] - gh[cb], nrm)
        coef = _min_branch(
            cf2 * hf / eps,
            np.full(hf.shape, cf2 / max(np.sqrt(max(sigma0, 1e-300)) * np.sqrt(eps), 1e-300)),
            sigma0,
        )
        f_sq.append(coef * jump**2 * hf)
        f_cells.append(np.column_stack([ca, cb]))
    if v.fneu_v.shape[0]:
        a, b_ = v.fneu_v[:, 0], v.fneu_v[:, 1]
        ck = v.fneu_c
        t = X[b_] - X[a]
        hf = np.hypot(t[:, 0], t[:, 1])
        nrm = np.column_stack([t[:, 1], -t[:, 0]]) / hf[:, None]
        # orient outward: away from the cell centroid
        cent = X[v.tris[ck]].mean(axis=1)
        mid = 0.5 * (X[a] + X[b_])
        flip = np.einsum("fd,fd->f", mid - cent, nrm) < 0.0
        nrm[flip] *= -1.0
        dn = np.einsum("fd,fd->f", gh[ck], nrm)
        if callable(spec.g):
            gt, gw = np.polynomial.legendre.leggauss(3)
            gt = 0.5 * (gt + 1.0)
            gw = 0.5 * gw
            acc = np.zeros(hf.shape)
            for tq, wq in zip(gt, gw):
                px = X[a][:, 0] + tq * t[:, 0]
                py = X[a][:, 1] + tq * t[:, 1]
                acc += wq * (np.asarray(spec.g(px, py), dtype=float) - eps * dn) ** 2
            r_sq = acc * hf
        else:
            gconst = 0.0 if spec.g is None else float(spec.g)
            r_sq = (gconst - eps * dn) ** 2 * hf
        coef = _min_branch(
            cf2 * hf / eps,
            np.full(hf.shape, cf2 / max(np.sqrt(max(sigma0, 1e-300)) * np.sqrt(eps), 1e-300)),
            sigma0,
        )
        f_sq.append(coef * r_sq)
        f_cells.append(np.column_stack([ck, np.full(ck.shape, -1, dtype=np.int64)]))
    if v.fdir_v.shape[0]:
        f_sq.append(np.zeros(v.fdir_v.shape[0]))
        f_cells.append(
            np.column_stack([v.fdir_c, np.full(v.fdir_c.shape, -1, dtype=np.int64)])
        )
    eta2_sq = np.concatenate(f_sq) if f_sq else np.zeros(0)
    eta2_cells = (
        np.concatenate(f_cells, axis=0) if f_cells else np.zeros((0, 2), dtype=np.int64)
    )

    # edge term (AFC variants only)
    if variant == "afc_energy":
        ev, epair, ecs = v.e3_v, v.e3_pair, v.e3_c
        use = epair[:, 0] >= 0
        ev, epair, ecs = ev[use], epair[use], ecs[use]
        t = X[ev[:, 1]] - X[ev[:, 0]]
        he = np.hypot(t[:, 0], t[:, 1])
        te = t / he[:, None]
        # average tangential derivative of the adjacent cells (single-sided on
        # the boundary); both sides coincide for a continuous P1 function
        g1 = np.einsum("ed,ed->e", gh[ecs[:, 0]], te)
        have2 = ecs[:, 1] >= 0
        g2 = np.where(have2, np.einsum("ed,ed->e", gh[np.maximum(ecs[:, 1], 0)], te), g1)
        gt = 0.5 * (g1 + g2)
        d_e = get_entries(d_mat, epair[:, 0], epair[:, 1])
        a_e = get_entries(alpha_mat, epair[:, 0], epair[:, 1])
        k1 = 4.0 * constants.kappa1
        k2 = 4.0 * constants.kappa2
        coef = _min_branch(
            k1 * he**2 / eps, np.full(he.shape, k2 / max(sigma0, 1e-300)), sigma0
        )
        # d = 2: h_E^(1-d) = 1/h_E and the edge integral of the constant
        # tangential derivative is gt^2 * h_E
        eta3_sq = coef * (1.0 - a_e) ** 2 * d_e**2 * gt**2
        eta3_cells = ecs
    else:
        eta3_sq = np.zeros(0)
        eta3_cells = np.zeros((0, 2), dtype=np.int64)

    total = float(eta1_sq.sum() + eta2_sq.sum() + eta3_sq.sum())
    return IndicatorField(
        variant=variant,
        eta1_sq=eta1_sq,
        eta2_sq=eta2_sq,
        eta2_cells=eta2_cells,
        eta3_sq=eta3_sq,
        eta3_cells=eta3_cells,
        eta=float(np.sqrt(total)),
    )


def localize_for_marking(ind):
    """Per-cell indicator: cell term plus equal shares of each facet/edge
    contribution among its adjacent cells.  Sums to eta**2."""
    out = ind.eta1_sq.copy()
    m = out.shape[0]

    def scatter(contrib, cells):
        if contrib.shape[0] == 0:
            return
        both = cells[:, 1] >= 0
        share = np.where(both, 0.5 * contrib, contrib)
        out[:] += np.bincount(cells[:, 0], weights=share, minlength=m)[:m]
        if np.any(both):
            out[:] += np.bincount(
                cells[both, 1], weights=0.5 * contrib[both], minlength=m
            )[:m]

    scatter(ind.eta2_sq, ind.eta2_cells)
    scatter(ind.eta3_sq, ind.eta3_cells)
    return out
