"""PDE data for the steady convection-diffusion-reaction equation and the
three built-in benchmark problems.

The equation is ``-eps Laplace(u) + b . grad(u) + c u = f`` with Dirichlet
data ``u_b`` on the Dirichlet part of the boundary and ``eps grad(u) . n = g``
on the Neumann part.  Coefficients may be constants or vectorized callables
``f(x, y)`` taking numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .mesh import CircleBoundary, Triangulation, unit_square_mesh

__all__ = [
    "ProblemSpec",
    "ExactSolution",
    "SmearCut",
    "Schedule",
    "builtin_problem",
    "evaluate_exact",
]


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form solution with gradient, both vectorized over points."""

    value: object
    gradient: object

    def __call__(self, x, y):
        return self.value(x, y)


@dataclass(frozen=True)
class SmearCut:
    """Cut line for layer-width measurement: coordinate ``axis`` is fixed at
    ``value``; the other coordinate runs over ``(lo, hi)``."""

    axis: int
    value: float
    lo: float
    hi: float


@dataclass(frozen=True)
class Schedule:
    """Refinement schedule: uniform pre-refinements before the first solve,
    uniform refinement until ``uniform_until``, then adaptive."""

    pre_uniform: int
    uniform_until: int
    eps_thresh: float


@dataclass
class ProblemSpec:
    name: str
    epsilon: float
    b: object
    c: object
    f: object
    u_b: object
    g: object = None
    sigma0: float = 0.0
    exact: ExactSolution | None = None
    osc_bounds: tuple | None = None
    smear_cut: SmearCut | None = None
    domain_box: tuple | None = None  # (x0, x1, y0, y1) used by evaluate_exact

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def _boundary_layer(epsilon):
    eps = epsilon

    def _parts(x, y):
        e1 = np.exp(2.0 * (x - 1.0) / eps)
        e2 = np.exp(3.0 * (y - 1.0) / eps)
        e12 = e1 * e2
        return e1, e2, e12

    def u(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        e1, e2, e12 = _parts(x, y)
        return x * y**2 - y**2 * e1 - x * e2 + e12

    def grad(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        e1, e2, e12 = _parts(x, y)
        ux = y**2 - (2.0 / eps) * y**2 * e1 - e2 + (2.0 / eps) * e12
        uy = 2.0 * x * y - 2.0 * y * e1 - (3.0 / eps) * x * e2 + (3.0 / eps) * e12
        return ux, uy

    def f(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        e1, e2, e12 = _parts(x, y)
        ux = y**2 - (2.0 / eps) * y**2 * e1 - e2 + (2.0 / eps) * e12
        uy = 2.0 * x * y - 2.0 * y * e1 - (3.0 / eps) * x * e2 + (3.0 / eps) * e12
        uxx = -(4.0 / eps**2) * y**2 * e1 + (4.0 / eps**2) * e12
        uyy = 2.0 * x - 2.0 * e1 - (9.0 / eps**2) * x * e2 + (9.0 / eps**2) * e12
        uu = x * y**2 - y**2 * e1 - x * e2 + e12
        return -eps * (uxx + uyy) + 2.0 * ux + 3.0 * uy + uu

    exact = ExactSolution(u, grad)
    spec = ProblemSpec(
        name="boundary_layer",
        epsilon=eps,
        b=(2.0, 3.0),
        c=1.0,
        f=f,
        u_b=u,
        sigma0=1.0,  # -(div b)/2 + c = 1
        exact=exact,
        domain_box=(0.0, 1.0, 0.0, 1.0),
    )
    mesh = unit_square_mesh(diagonal="main", tag="D")
    return spec, mesh, Schedule(pre_uniform=2, uniform_until=5, eps_thresh=1e-10)


def _hmm86(epsilon):
    theta = -math.pi / 3.0
    bx, by = math.cos(theta), math.sin(theta)

    def u_b(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        on_top = (np.abs(y - 1.0) <= 1e-12) & (x > 0.0)
        on_left = (np.abs(x) <= 1e-12) & (y > 0.7)
        return np.where(on_top | on_left, 1.0, 0.0)

    spec = ProblemSpec(
        name="hmm86",
        epsilon=epsilon,
        b=(bx, by),
        c=0.0,
        f=0.0,
        u_b=u_b,
        sigma0=0.0,
        osc_bounds=(0.0, 1.0),
        smear_cut=SmearCut(axis=1, value=0.25, lo=0.0, hi=1.0),
        domain_box=(0.0, 1.0, 0.0, 1.0),
    )
    mesh = unit_square_mesh(diagonal="anti", tag="D")
    return spec, mesh, Schedule(pre_uniform=2, uniform_until=5, eps_thresh=1e-10)


def _hemker(epsilon, mesh_path=None):
    if epsilon is not None and epsilon != 1e-4:
        raise ValueError("the Hemker benchmark is fixed at epsilon=1e-4")

    def u_b(x, y):
        x = np.asarray(x, dtype=float)
        return np.where(x <= -3.0 + 1e-9, 0.0, 1.0)

    spec = ProblemSpec(
        name="hemker",
        epsilon=1e-4,
        b=(1.0, 0.0),
        c=0.0,
        f=0.0,
        u_b=u_b,
        g=0.0,
        sigma0=0.0,
        osc_bounds=(0.0, 1.0),
        smear_cut=SmearCut(axis=0, value=4.0, lo=0.2, hi=2.0),
    )
    if mesh_path is None:
        ref = resources.files("stabfem").joinpath("data/hemker.mesh")
        if not ref.is_file():
            raise FileNotFoundError("hemker mesh file missing from package data")
        from .io import read_mesh

        with resources.as_file(ref) as p:
            mesh = read_mesh(p)
    else:
        from .io import read_mesh

        mesh = read_mesh(mesh_path)
    mesh.project_boundary(CircleBoundary((0.0, 0.0), 1.0))
    return spec, mesh, Schedule(pre_uniform=0, uniform_until=0, eps_thresh=1e-8)


_BUILTIN_DEFAULT_EPS = {"boundary_layer": 1e-2, "hmm86": 1e-6, "hemker": 1e-4}


def builtin_problem(name, epsilon=None, mesh_path=None):
    """Problem data, initial mesh, and refinement schedule for a benchmark.

    Returns ``(spec, mesh, schedule)``.  ``epsilon`` overrides the default
    diffusion for boundary_layer and hmm86; the Hemker problem is fixed at
    1e-4.
    """
    name = name.replace("-", "_")
    if name == "boundary_layer":
        return _boundary_layer(_BUILTIN_DEFAULT_EPS[name] if epsilon is None else epsilon)
    if name == "hmm86":
        return _hmm86(_BUILTIN_DEFAULT_EPS[name] if epsilon is None else epsilon)
    if name == "hemker":
        return _hemker(epsilon, mesh_path=mesh_path)
    raise ValueError(f"unknown builtin problem {name!r}")


def evaluate_exact(spec, points):
    """Values and gradients of the closed-form solution at the given points."""
    if spec.exact is None:
        raise ValueError(f"problem {spec.name!r} has no exact solution")
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    x, y = points[:, 0], points[:, 1]
    if spec.domain_box is not None:
        x0, x1, y0, y1 = spec.domain_box
        tol = 1e-12
        if np.any((x < x0 - tol) | (x > x1 + tol) | (y < y0 - tol) | (y > y1 + tol)):
            raise ValueError("evaluation point outside the problem domain")
    vals = spec.exact(x, y)
    gx, gy = spec.exact.gradient(x, y)
    return np.asarray(vals), np.column_stack([gx, gy])
