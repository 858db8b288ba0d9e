"""Boundary integral formulations evaluated without kernels.

Each layer or volume potential is the grid solution of an interface problem,
and the boundary operators are its one-sided traces. A GMRES matrix-vector
product is therefore one interface solve per region followed by extraction.

Conventions: jumps are interior minus exterior, the normal points out of the
interior components, region 1 is the union of all interior components and
region 2 the exterior. The physical equation is
``div(sigma grad u) - kappa u = f``; ``psi``-type densities are fluxes
``sigma du/dn``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import Geometry, SurfaceMesh, build_surface_mesh
from .grid import Grid2D, NodeClassification, classify_nodes
from .interface import InterfaceSolution, InterfaceSolver, Source, Traces

KINDS = ("dirichlet", "neumann", "interface_two_density", "interface_single_density")


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, result: "GMRESResult"):
        super().__init__(message)
        self.result = result


@dataclass
class GMRESResult:
    x: np.ndarray
    iterations: int
    residuals: list[float]
    converged: bool


def gmres(apply: Callable[[np.ndarray], np.ndarray], rhs: np.ndarray, tol: float = 1e-10, max_iter: int = 200) -> GMRESResult:
    """Unrestarted GMRES from a zero initial guess.

    Modified Gram-Schmidt with one re-orthogonalization pass and Givens
    rotations. ``residuals`` are relative to ``||rhs||`` and start with 1.
    """
    b = np.asarray(rhs, dtype=float)
    n = b.size
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return GMRESResult(np.zeros(n), 0, [0.0], True)
    m = min(max_iter, n)
    V = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = bnorm
    V[0] = b / bnorm
    history = [1.0]
    k_done = 0
    converged = False
    for k in range(m):
        w = apply(V[k])
        for _ in range(2):
            for j in range(k + 1):
                hjk = V[j] @ w
                H[j, k] += hjk
                w = w - hjk * V[j]
        H[k + 1, k] = np.linalg.norm(w)
        breakdown = H[k + 1, k] <= 1e-14 * bnorm
        if not breakdown:
            V[k + 1] = w / H[k + 1, k]
        for j in range(k):
            t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
            H[j + 1, k] = -sn[j] * H[j, k] + cs[j] * H[j + 1, k]
            H[j, k] = t
        denom = np.hypot(H[k, k], H[k + 1, k])
        cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
        H[k, k] = denom
        H[k + 1, k] = 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        rel = abs(g[k + 1]) / bnorm
        history.append(rel)
        k_done = k + 1
        if rel <= tol or breakdown:
            converged = rel <= tol or breakdown
            break
    y = np.linalg.solve(np.triu(H[:k_done, :k_done]), g[:k_done])
    x = V[:k_done].T @ y
    return GMRESResult(x, k_done, history, converged)


@dataclass
class Discretization:
    """Grid, geometry, node classification and surface points, shared by all solves."""

    grid: Grid2D
    geometry: Geometry
    alpha: float = np.pi / 4
    classification: NodeClassification = field(init=False)
    mesh: SurfaceMesh = field(init=False)
    _solvers: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.mesh = build_surface_mesh(self.grid, self.geometry, self.alpha)
        self.classification = classify_nodes(self.grid, self.geometry)

    def solver(self, kappa: float) -> InterfaceSolver:
        key = float(kappa)
        if key not in self._solvers:
            self._solvers[key] = InterfaceSolver(self.grid, self.mesh, self.classification, key)
        return self._solvers[key]

    @property
    def region(self) -> np.ndarray:
        return self.classification.region


# (x, y, nx, ny) -> values at surface points
SurfaceData = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class FormulationSpec:
    """Coefficients and data of one boundary-value or interface problem.

    ``boundary_data`` is ``g_D`` or ``g_N`` for the boundary-value kinds;
    ``jump_value`` and ``jump_flux`` are ``[u]`` and ``[sigma du/dn]`` for the
    interface kinds. ``box_data`` gives Dirichlet values on the outer box
    for the interface kinds (zero when omitted).
    """

    kind: str
    sigma_in: float = 1.0
    kappa_in: float = 0.0
    sigma_out: float = 1.0
    kappa_out: float = 0.0
    f_in: Source | None = None
    f_out: Source | None = None
    boundary_data: SurfaceData | None = None
    jump_value: SurfaceData | None = None
    jump_flux: SurfaceData | None = None
    box_data: Callable | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown formulation {self.kind!r}; expected one of {KINDS}")
        if self.sigma_in <= 0 or self.sigma_out <= 0:
            raise ValueError("sigma must be positive")
        if self.kappa_in < 0 or self.kappa_out < 0:
            raise ValueError("kappa must be non-negative")
        if self.kind == "interface_single_density" and not np.isclose(
            self.kappa_in / self.sigma_in, self.kappa_out / self.sigma_out, rtol=1e-12, atol=0.0
        ):
            raise ValueError("single-density interface form needs kappa_in/sigma_in == kappa_out/sigma_out")

    @property
    def mu(self) -> float:
        return (self.sigma_out - self.sigma_in) / (self.sigma_out + self.sigma_in)


@dataclass
class PotentialTraces:
    solution: InterfaceSolution
    interior: Traces
    exterior: Traces


@dataclass
class BIESolution:
    u: np.ndarray
    region: np.ndarray
    density: np.ndarray
    gmres: GMRESResult
    n_b: int
    fast_solves: int


def _surface(disc: Discretization, fn: SurfaceData | None) -> np.ndarray:
    m = disc.mesh
    if fn is None:
        return np.zeros(m.size)
    return np.asarray(fn(m.x, m.y, m.nx, m.ny), dtype=float)


def _box_values(disc: Discretization, fn: Callable | None) -> np.ndarray | None:
    if fn is None:
        return None
    X, Y = disc.grid.mesh()
    return np.asarray(fn(X, Y), dtype=float)


def _scaled(src: Source | None, sigma: float) -> Source | None:
    return None if src is None else src.scaled(1.0 / sigma)


def eval_potential(
    solver: InterfaceSolver,
    sigma: float = 1.0,
    phi: np.ndarray | None = None,
    psi: np.ndarray | None = None,
    f_in: Source | None = None,
    f_out: Source | None = None,
    box: np.ndarray | None = None,
) -> PotentialTraces:
    """Combined potential ``D phi - S psi + N f`` for the operator ``sigma Lap - kappa``.

    ``phi`` is the value jump and ``psi`` the flux jump ``[sigma du/dn]``;
    both are handled in the same single fast solve. Returned normal
    derivatives are ``du/dn``, not fluxes.
    """
    b = None if psi is None else np.asarray(psi) / sigma
    sol = solver.solve(phi, b, _scaled(f_in, sigma), _scaled(f_out, sigma), box)
    return PotentialTraces(sol, solver.extract(sol, "interior"), solver.extract(sol, "exterior"))


def _run_gmres(apply, rhs, tol, max_iter) -> GMRESResult:
    res = gmres(apply, rhs, tol, max_iter)
    if not res.converged:
        raise ConvergenceError(f"GMRES did not reach {tol:g} in {res.iterations} iterations (last {res.residuals[-1]:.2e})", res)
    return res


def _count_solves(disc: Discretization) -> int:
    return sum(s.fast.solves for s in disc._solvers.values())


def solve_dirichlet_bvp(spec: FormulationSpec, disc: Discretization, tol: float = 1e-10, max_iter: int = 200) -> BIESolution:
    """``(1/2 + K) phi = g_D - G f``; the field is ``D phi + N f`` in the interior."""
    sigma = spec.sigma_in
    S = disc.solver(spec.kappa_in / sigma)
    start = _count_solves(disc)
    fin = _scaled(spec.f_in, sigma)
    newton = S.extract(S.solve(f_in=fin), "interior").value
    rhs = _surface(disc, spec.boundary_data) - newton

    def apply(phi):
        return S.extract(S.solve(a=phi), "interior").value

    res = _run_gmres(apply, rhs, tol, max_iter)
    u = S.solve(a=res.x, f_in=fin).u
    return BIESolution(u, disc.region, res.x, res, disc.mesh.size, _count_solves(disc) - start)


def _remove_mean(v: np.ndarray) -> np.ndarray:
    return v - v.mean()


def solve_neumann_bvp(spec: FormulationSpec, disc: Discretization, tol: float = 1e-10, max_iter: int = 200) -> BIESolution:
    """``(1/2 - K') psi = g_N - sigma dG f/dn``; the field is ``-S psi + N f``.

    For ``kappa = 0`` the right-hand side and every product are shifted to
    zero mean over the surface points, and the field is defined up to a
    constant.
    """
    sigma = spec.sigma_in
    S = disc.solver(spec.kappa_in / sigma)
    start = _count_solves(disc)
    fin = _scaled(spec.f_in, sigma)
    newton = sigma * S.extract(S.solve(f_in=fin), "interior").normal_derivative
    rhs = _surface(disc, spec.boundary_data) - newton
    singular = spec.kappa_in == 0.0

    def apply(psi):
        out = sigma * S.extract(S.solve(b=psi / sigma), "interior").normal_derivative
        return _remove_mean(out) if singular else out

    if singular:
        rhs = _remove_mean(rhs)
    res = _run_gmres(apply, rhs, tol, max_iter)
    u = S.solve(b=res.x / sigma, f_in=fin).u
    return BIESolution(u, disc.region, res.x, res, disc.mesh.size, _count_solves(disc) - start)


def solve_interface_two_density(spec: FormulationSpec, disc: Discretization, tol: float = 1e-10, max_iter: int = 200) -> BIESolution:
    """Stacked ``(phi, psi)`` system with ``phi`` the interior trace and ``psi`` the exterior flux.

    Interior field: ``D1 phi - S1 (psi + g2) + N1 f1``; exterior field:
    ``-D2 (phi - g1) + S2 psi + N2 f2`` plus the box data. Summing the
    interior and exterior trace identities gives a second-kind system with
    two fast solves per product.
    """
    s1, s2 = spec.sigma_in, spec.sigma_out
    S1 = disc.solver(spec.kappa_in / s1)
    S2 = disc.solver(spec.kappa_out / s2)
    start = _count_solves(disc)
    nb = disc.mesh.size
    g1 = _surface(disc, spec.jump_value)
    g2 = _surface(disc, spec.jump_flux)
    box = _box_values(disc, spec.box_data)

    def apply(x):
        phi, psi = x[:nb], x[nb:]
        t1 = eval_potential(S1, s1, phi, psi).interior
        t2 = eval_potential(S2, s2, phi, psi).exterior
        return np.concatenate([2 * phi - t1.value + t2.value, 2 * psi - s1 * t1.normal_derivative + s2 * t2.normal_derivative])

    k1 = eval_potential(S1, s1, psi=g2, f_in=spec.f_in).interior
    k2 = eval_potential(S2, s2, phi=g1, f_out=spec.f_out, box=box).exterior
    rhs = np.concatenate([g1 + k1.value + k2.value, -g2 + s1 * k1.normal_derivative + s2 * k2.normal_derivative])
    res = _run_gmres(apply, rhs, tol, max_iter)
    phi, psi = res.x[:nb], res.x[nb:]
    u1 = eval_potential(S1, s1, phi, psi + g2, f_in=spec.f_in).solution.u
    u2 = eval_potential(S2, s2, g1 - phi, -psi, f_out=spec.f_out, box=box).solution.u
    u = np.where(disc.region > 0, u1, u2)
    return BIESolution(u, disc.region, res.x, res, nb, _count_solves(disc) - start)


def solve_interface_single_density(spec: FormulationSpec, disc: Discretization, tol: float = 1e-10, max_iter: int = 200) -> BIESolution:
    """``psi/2 + mu K' psi = g2/(sigma_in + sigma_out) + mu (D g1 + dG f/dn)`` with ``psi = [du/dn]``.

    Works with the scaled operator ``Lap - kappa/sigma`` on both sides; the
    field is the interface solution with jumps ``(g1, psi)`` and sources
    ``f/sigma``. One fast solve per product.
    """
    s1, s2 = spec.sigma_in, spec.sigma_out
    S = disc.solver(spec.kappa_in / s1)
    start = _count_solves(disc)
    mu = spec.mu
    g1 = _surface(disc, spec.jump_value)
    g2 = _surface(disc, spec.jump_flux)
    box = _box_values(disc, spec.box_data)
    fin, fout = _scaled(spec.f_in, s1), _scaled(spec.f_out, s2)

    def mean_flux(sol):
        return 0.5 * (S.extract(sol, "interior").normal_derivative + S.extract(sol, "exterior").normal_derivative)

    def apply(psi):
        return 0.5 * psi - mu * mean_flux(S.solve(b=psi))

    rhs = g2 / (s1 + s2)
    if mu != 0.0:
        rhs = rhs + mu * mean_flux(S.solve(a=g1, f_in=fin, f_out=fout, boundary=box))
    res = _run_gmres(apply, rhs, tol, max_iter)
    u = S.solve(a=g1, b=res.x, f_in=fin, f_out=fout, boundary=box).u
    return BIESolution(u, disc.region, res.x, res, disc.mesh.size, _count_solves(disc) - start)


SOLVERS = {
    "dirichlet": solve_dirichlet_bvp,
    "neumann": solve_neumann_bvp,
    "interface_two_density": solve_interface_two_density,
    "interface_single_density": solve_interface_single_density,
}


def solve(spec: FormulationSpec, disc: Discretization, tol: float = 1e-10, max_iter: int = 200) -> BIESolution:
    return SOLVERS[spec.kind](spec, disc, tol, max_iter)
