"""Correction function ``C = u_in - u_out`` near each interface component.

Around every surface point the correction is a quartic polynomial in scaled
local coordinates ``(x - p) / h`` fitted by square collocation: six PDE rows
at grid nodes, five Dirichlet rows and four Neumann rows at neighboring
surface points. The band value at a node is taken from the polynomial of the
nearest surface point.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg

from .fast_solver import CompactStencil
from .geometry import GeometryError, SurfaceMesh, local_parameterization
from .grid import Grid2D, NodeClassification

DEGREE = 4
MONOMIALS = tuple((l, d - l) for d in range(DEGREE + 1) for l in range(d, -1, -1))
N_TERMS = len(MONOMIALS)
N_PDE, N_DIRICHLET, N_NEUMANN = 6, 5, 4
PIVOT_RATIO_LIMIT = 1e8
BAND_RADIUS = 6.0  # in units of h, from the nearest surface point

_L = np.array([l for l, _ in MONOMIALS])
_M = np.array([m for _, m in MONOMIALS])


def _pow(base, e):
    base = np.asarray(base, dtype=float)[..., None]
    out = np.where(e >= 0, base ** np.maximum(e, 0), 0.0)
    return out


def monomials(xi, eta) -> np.ndarray:
    """Taylor basis ``xi^l eta^m``, shape ``(..., 15)``."""
    return _pow(xi, _L) * _pow(eta, _M)


def monomial_gradient(xi, eta) -> tuple[np.ndarray, np.ndarray]:
    dxi = _L * _pow(xi, _L - 1) * _pow(eta, _M)
    deta = _M * _pow(xi, _L) * _pow(eta, _M - 1)
    return dxi, deta


def monomial_laplacian(xi, eta) -> np.ndarray:
    return _L * (_L - 1) * _pow(xi, _L - 2) * _pow(eta, _M) + _M * (_M - 1) * _pow(xi, _L) * _pow(eta, _M - 2)


@dataclass(frozen=True)
class CauchyData:
    """Jumps ``a = [u]``, ``b = [du/dn]`` at surface points and ``f_tilde = f_in - f_out``."""

    a: np.ndarray
    b: np.ndarray
    f_tilde: Callable
    kappa: float = 0.0


@dataclass(frozen=True)
class CollocationPoints:
    dirichlet: np.ndarray  # surface point indices, ordered along the curve
    neumann: np.ndarray
    pde_points: np.ndarray  # (6, 2) coordinates of the PDE rows

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.pde_points), len(self.dirichlet), len(self.neumann)


@dataclass(frozen=True)
class LocalPolynomial:
    center: tuple[float, float]
    h: float
    coef: np.ndarray

    def __call__(self, x, y):
        xi = (np.asarray(x) - self.center[0]) / self.h
        eta = (np.asarray(y) - self.center[1]) / self.h
        return monomials(xi, eta) @ self.coef

    def gradient(self, x, y):
        xi = (np.asarray(x) - self.center[0]) / self.h
        eta = (np.asarray(y) - self.center[1]) / self.h
        dxi, deta = monomial_gradient(xi, eta)
        return dxi @ self.coef / self.h, deta @ self.coef / self.h

    def laplacian(self, x, y):
        xi = (np.asarray(x) - self.center[0]) / self.h
        eta = (np.asarray(y) - self.center[1]) / self.h
        return monomial_laplacian(xi, eta) @ self.coef / self.h**2


def _pde_pattern(p: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Nearest node, its four edge neighbors and the diagonal toward ``p`` (coordinates)."""
    ci, cj = grid.nearest_node(p[0], p[1])
    cx, cy = grid.node(ci, cj)
    si = 1 if p[0] >= cx else -1
    sj = 1 if p[1] >= cy else -1
    offsets = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (si, sj)]
    nodes = np.array([(ci + di, cj + dj) for di, dj in offsets])
    if nodes.min() < 0 or nodes.max() > grid.n:
        raise GeometryError("collocation pattern leaves the box")
    return np.stack(grid.node(nodes[:, 0], nodes[:, 1]), axis=-1)


def select_collocation_points(i: int, mesh: SurfaceMesh, grid: Grid2D, alternate: bool = False) -> CollocationPoints:
    """Point sets for the local Cauchy problem centered at surface point ``i``.

    Dirichlet rows use five consecutive surface points around ``i``; the
    Neumann rows use the four of them closest to ``i`` along the curve, or
    with ``alternate`` the four that skip ``i`` itself.
    """
    dirichlet = local_parameterization(i, mesh, N_DIRICHLET)
    if alternate:
        neumann = dirichlet[dirichlet != i]
    else:
        p = mesh.points[i]
        t = (mesh.points[dirichlet] - p) @ np.array([-mesh.ny[i], mesh.nx[i]])
        drop = int(np.argmax(np.abs(t)))
        neumann = np.delete(dirichlet, drop)
    return CollocationPoints(dirichlet, neumann, _pde_pattern(mesh.points[i], grid))


def collocation_matrix(i: int, pts: CollocationPoints, mesh: SurfaceMesh, grid: Grid2D, kappa: float) -> np.ndarray:
    """The 15x15 collocation matrix in scaled coordinates.

    Rows are scaled so entries are O(1): PDE rows carry ``h^2 (Lap - kappa)``,
    Neumann rows ``h d/dn``.
    """
    h = grid.h
    p = mesh.points[i]
    nx_, ny_ = pts.pde_points[:, 0], pts.pde_points[:, 1]
    xi, eta = (np.asarray(nx_) - p[0]) / h, (np.asarray(ny_) - p[1]) / h
    pde = monomial_laplacian(xi, eta) - kappa * h * h * monomials(xi, eta)
    dp = (mesh.points[pts.dirichlet] - p) / h
    dir_rows = monomials(dp[:, 0], dp[:, 1])
    npnt = (mesh.points[pts.neumann] - p) / h
    gx, gy = monomial_gradient(npnt[:, 0], npnt[:, 1])
    neu_rows = mesh.nx[pts.neumann, None] * gx + mesh.ny[pts.neumann, None] * gy
    return np.vstack([pde, dir_rows, neu_rows])


def collocation_rhs(i: int, pts: CollocationPoints, mesh: SurfaceMesh, grid: Grid2D, data: CauchyData) -> np.ndarray:
    h = grid.h
    x, y = pts.pde_points[:, 0], pts.pde_points[:, 1]
    return np.concatenate([h * h * np.asarray(data.f_tilde(x, y), dtype=float), data.a[pts.dirichlet], h * data.b[pts.neumann]])


def _pivoted_inverse(M: np.ndarray) -> tuple[np.ndarray, float]:
    Q, R, P = linalg.qr(M, pivoting=True)
    d = np.abs(np.diag(R))
    ratio = np.inf if d[-1] == 0 else d[0] / d[-1]
    inv = np.empty_like(M)
    inv[P, :] = linalg.solve_triangular(R, Q.T)
    return inv, ratio


def solve_local_cauchy(i: int, pts: CollocationPoints, mesh: SurfaceMesh, grid: Grid2D, data: CauchyData) -> LocalPolynomial:
    """Solve the square collocation system at surface point ``i`` by pivoted QR."""
    M = collocation_matrix(i, pts, mesh, grid, data.kappa)
    Q = collocation_rhs(i, pts, mesh, grid, data)
    inv, ratio = _pivoted_inverse(M)
    if ratio > PIVOT_RATIO_LIMIT:
        raise np.linalg.LinAlgError(f"collocation matrix at point {i} is rank deficient (pivot ratio {ratio:.2e})")
    coef = inv @ Q
    res = np.linalg.norm(M @ coef - Q)
    if res > 1e-10 * max(np.linalg.norm(Q), 1e-300):
        raise np.linalg.LinAlgError(f"collocation residual {res:.2e} too large at point {i}")
    return LocalPolynomial((float(mesh.x[i]), float(mesh.y[i])), grid.h, coef)


class CollocationSet:
    """Collocation stencils and inverse matrices for every surface point.

    The matrices depend only on geometry and ``kappa``, so they are factored
    once and reused by every interface solve on the same grid.
    """

    def __init__(self, mesh: SurfaceMesh, grid: Grid2D, kappa: float = 0.0):
        self.mesh, self.grid, self.kappa = mesh, grid, float(kappa)
        nb = mesh.size
        self.points: list[CollocationPoints] = []
        self.inverse = np.empty((nb, N_TERMS, N_TERMS))
        self.cond = np.empty(nb)
        for i in range(nb):
            pts = select_collocation_points(i, mesh, grid)
            M = collocation_matrix(i, pts, mesh, grid, kappa)
            inv, ratio = _pivoted_inverse(M)
            if ratio > PIVOT_RATIO_LIMIT:
                pts = select_collocation_points(i, mesh, grid, alternate=True)
                M = collocation_matrix(i, pts, mesh, grid, kappa)
                inv, ratio = _pivoted_inverse(M)
                if ratio > PIVOT_RATIO_LIMIT:
                    raise np.linalg.LinAlgError(f"no well-posed collocation stencil at surface point {i}")
            self.points.append(pts)
            self.inverse[i] = inv
            self.cond[i] = np.linalg.cond(M)
        self.dirichlet = np.array([p.dirichlet for p in self.points])
        self.neumann = np.array([p.neumann for p in self.points])
        self.pde_xy = np.array([p.pde_points for p in self.points])

    def coefficients(self, a: np.ndarray, b: np.ndarray, f_tilde_pde: np.ndarray | None = None) -> np.ndarray:
        """Polynomial coefficients ``(N_b, 15)`` for jump data at all surface points.

        ``f_tilde_pde`` holds ``f_in - f_out`` at the six PDE nodes of each
        point, shape ``(N_b, 6)``; ``None`` means zero.
        """
        h = self.grid.h
        nb = self.mesh.size
        rhs = np.empty((nb, N_TERMS))
        rhs[:, :N_PDE] = 0.0 if f_tilde_pde is None else h * h * f_tilde_pde
        rhs[:, N_PDE : N_PDE + N_DIRICHLET] = np.asarray(a)[self.dirichlet]
        rhs[:, N_PDE + N_DIRICHLET :] = h * np.asarray(b)[self.neumann]
        return np.einsum("pij,pj->pi", self.inverse, rhs)

    def polynomial(self, i: int, coef: np.ndarray) -> LocalPolynomial:
        return LocalPolynomial((float(self.mesh.x[i]), float(self.mesh.y[i])), self.grid.h, coef[i])


@dataclass
class BandEvaluator:
    """Fixed band points with their owning surface point and basis row.

    Evaluating the correction at many fixed nodes is then one contraction
    with the current polynomial coefficients.
    """

    owner: np.ndarray
    rows: np.ndarray

    @classmethod
    def build(cls, xy: np.ndarray, comp: np.ndarray, mesh: SurfaceMesh, band: float = BAND_RADIUS):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if len(xy) == 0:
            return cls(np.empty(0, dtype=int), np.empty((0, N_TERMS)))
        owner, dist = mesh.nearest(xy, comp)
        h = mesh.grid.h
        if np.any(dist > band * h):
            worst = float(dist.max() / h)
            raise GeometryError(f"point at {worst:.2f}h from the interface lies outside the correction band")
        rel = (xy - mesh.points[owner]) / h
        return cls(owner, monomials(rel[:, 0], rel[:, 1]))

    def __call__(self, coef: np.ndarray) -> np.ndarray:
        return np.einsum("pj,pj->p", self.rows, coef[self.owner])


def correction_at(xy, comp, coef: np.ndarray, mesh: SurfaceMesh, band: float = BAND_RADIUS) -> np.ndarray:
    """Correction values at points using the nearest surface point's polynomial."""
    return BandEvaluator.build(xy, comp, mesh, band)(coef)


def rhs_corrections(classification: NodeClassification, correction: Callable, stencil: CompactStencil) -> np.ndarray:
    """Right-hand-side corrections of the compact scheme at every node.

    For an irregular node P in region A and a stencil neighbor Q in region
    B != A the scheme picks up ``c_PQ (C_B(Q) - C_A(Q))``, where ``C_k`` is
    the correction of component ``k`` and ``C_0 = 0``. With one interface this
    is the usual ``-c C`` for interior P and ``+c C`` for exterior P; across a
    double crossing it gives ``C_B - C_A``.

    ``correction(flat_node, comp)`` returns ``C_comp`` at a node.
    """
    g = classification.grid
    region = classification.region
    out = np.zeros(g.shape)
    for P, Q, r, s in classification.cut_pairs():
        pi, pj = g.unflat(P)
        qi, qj = g.unflat(Q)
        A, B = region[pi, pj], region[qi, qj]
        c = stencil.weight(r, s)
        val = 0.0
        if B > 0:
            val += correction(Q, B)
        if A > 0:
            val -= correction(Q, A)
        out[pi, pj] += c * val
    return out


def build_f_tilde(f_in: Callable | None, f_out: Callable | None) -> Callable:
    """``f_in - f_out`` as a callable; ``None`` stands for a zero source."""

    def f_tilde(x, y):
        x = np.asarray(x, dtype=float)
        val = np.zeros(np.broadcast(x, np.asarray(y)).shape)
        if f_in is not None:
            val = val + f_in(x, y)
        if f_out is not None:
            val = val - f_out(x, y)
        return val

    return f_tilde
