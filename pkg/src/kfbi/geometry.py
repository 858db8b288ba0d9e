"""Level-set interfaces, grid-line intersections and surface point sets.

A geometry is a list of disjoint closed curves, each the zero set of a
level-set function that is negative inside. Surface points are the
intersections of each curve with the grid lines; a point found on a line
aligned with axis ``r`` joins the family ``r`` when the normal is close
enough to that axis, which gives the overlapping decomposition used by the
collocation and extraction stencils.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .grid import Grid2D, GridError

GRAD_FLOOR = 1e-6
ON_INTERFACE_TOL = 1e-14
SUBDIVISIONS = 4


class GeometryError(ValueError):
    pass


class LevelSet:
    """Scalar field ``H(x, y)``, negative inside, with an analytic gradient."""

    def __call__(self, x, y):
        raise NotImplementedError

    def gradient(self, x, y):
        raise NotImplementedError

    def hessian(self, x, y, eps: float = 1e-6):
        """Central differences of the analytic gradient."""
        gxp, gyp = self.gradient(x + eps, y)
        gxm, gym = self.gradient(x - eps, y)
        hxx, hxy = (gxp - gxm) / (2 * eps), (gyp - gym) / (2 * eps)
        gxp, gyp = self.gradient(x, y + eps)
        gxm, gym = self.gradient(x, y - eps)
        return hxx, hxy, (gyp - gym) / (2 * eps)

    def normal(self, x, y):
        gx, gy = self.gradient(x, y)
        norm = np.hypot(gx, gy)
        if np.any(norm <= GRAD_FLOOR):
            raise GeometryError("level-set gradient vanishes on the interface")
        return gx / norm, gy / norm


@dataclass(frozen=True)
class Circle(LevelSet):
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0

    def __call__(self, x, y):
        return (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2 - self.radius**2

    def gradient(self, x, y):
        return 2.0 * (x - self.center[0]), 2.0 * (y - self.center[1])


@dataclass(frozen=True)
class Ellipse(LevelSet):
    """``(x'/a)^2 + (y'/b)^2 - 1`` with ``x' = dx cos t + dy sin t``, ``y' = dy cos t - dx sin t``."""

    center: tuple[float, float] = (0.0, 0.0)
    a: float = 1.0
    b: float = 0.5
    theta: float = 0.0

    def _rotated(self, x, y):
        c, s = np.cos(self.theta), np.sin(self.theta)
        dx, dy = x - self.center[0], y - self.center[1]
        return dx * c + dy * s, dy * c - dx * s

    def __call__(self, x, y):
        u, v = self._rotated(x, y)
        return (u / self.a) ** 2 + (v / self.b) ** 2 - 1.0

    def gradient(self, x, y):
        c, s = np.cos(self.theta), np.sin(self.theta)
        u, v = self._rotated(x, y)
        du, dv = 2 * u / self.a**2, 2 * v / self.b**2
        return du * c - dv * s, du * s + dv * c


@dataclass(frozen=True)
class Star(LevelSet):
    """``(x/a)^2 + (y/b)^2 - (1 + eps sin(m theta))^2`` with ``theta = atan2(y, x)``."""

    center: tuple[float, float] = (0.0, 0.0)
    a: float = 0.514
    b: float = 0.514
    eps: float = 0.2
    m: int = 5

    def __call__(self, x, y):
        dx, dy = x - self.center[0], y - self.center[1]
        th = np.arctan2(dy, dx)
        return (dx / self.a) ** 2 + (dy / self.b) ** 2 - (1 + self.eps * np.sin(self.m * th)) ** 2

    def gradient(self, x, y):
        dx, dy = x - self.center[0], y - self.center[1]
        th = np.arctan2(dy, dx)
        r2 = dx * dx + dy * dy
        dr = -2 * (1 + self.eps * np.sin(self.m * th)) * self.eps * self.m * np.cos(self.m * th)
        return 2 * dx / self.a**2 + dr * (-dy / r2), 2 * dy / self.b**2 + dr * (dx / r2)


@dataclass(frozen=True)
class HalfPlane(LevelSet):
    """``ax x + ay y + c``; only meaningful for tests on straight interfaces."""

    ax: float = 0.0
    ay: float = 1.0
    c: float = 0.0

    def __call__(self, x, y):
        return self.ax * x + self.ay * y + self.c

    def gradient(self, x, y):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, self.ax), np.full_like(x, self.ay)


@dataclass(frozen=True)
class MinCombination(LevelSet):
    """Union of the interiors of several level sets, ``min_k H_k``."""

    parts: tuple[LevelSet, ...] = ()

    def __call__(self, x, y):
        return np.min([p(x, y) for p in self.parts], axis=0)

    def gradient(self, x, y):
        vals = np.array([p(x, y) for p in self.parts])
        k = np.argmin(vals, axis=0)
        grads = np.array([p.gradient(x, y) for p in self.parts])
        gx = np.take_along_axis(grads[:, 0], k[None], axis=0)[0]
        gy = np.take_along_axis(grads[:, 1], k[None], axis=0)[0]
        return gx, gy


def _inside(values):
    return values <= ON_INTERFACE_TOL


def _roots(ls: LevelSet, a: np.ndarray, b: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Parameter ``s`` in [0, 1] of the crossing on each segment ``a + s (b - a)``.

    Each segment must have a change of inside flag between its ends. Bisection
    to width 1e-3, then safeguarded Newton; anything Newton leaves
    unconverged is finished by bisection to machine precision.
    """
    d = b - a
    lo = np.zeros(len(a))
    hi = np.ones(len(a))
    lo_in = _inside(ls(a[:, 0], a[:, 1]))

    def split(s):
        inside = _inside(ls(a[:, 0] + s * d[:, 0], a[:, 1] + s * d[:, 1]))
        same = inside == lo_in
        return np.where(same, s, lo), np.where(same, hi, s)

    for _ in range(10):
        lo, hi = split(0.5 * (lo + hi))

    s = 0.5 * (lo + hi)
    done = np.zeros(len(a), dtype=bool)
    for _ in range(20):
        px, py = a[:, 0] + s * d[:, 0], a[:, 1] + s * d[:, 1]
        val = ls(px, py)
        gx, gy = ls.gradient(px, py)
        slope = gx * d[:, 0] + gy * d[:, 1]
        same = _inside(val) == lo_in
        lo, hi = np.where(same, s, lo), np.where(same, hi, s)
        done |= np.abs(val) <= 0.01 * tol
        with np.errstate(divide="ignore", invalid="ignore"):
            s_new = s - val / slope
        bad = ~np.isfinite(s_new) | (s_new <= lo) | (s_new >= hi)
        s_new = np.where(bad, 0.5 * (lo + hi), s_new)
        s = np.where(done, s, s_new)
        if done.all():
            break
    val = ls(a[:, 0] + s * d[:, 0], a[:, 1] + s * d[:, 1])
    stalled = np.abs(val) > tol
    if stalled.any():
        lo_s, hi_s = lo[stalled], hi[stalled]
        a_s, d_s, in_s = a[stalled], d[stalled], lo_in[stalled]
        for _ in range(60):
            mid = 0.5 * (lo_s + hi_s)
            inside = _inside(ls(a_s[:, 0] + mid * d_s[:, 0], a_s[:, 1] + mid * d_s[:, 1]))
            same = inside == in_s
            lo_s, hi_s = np.where(same, mid, lo_s), np.where(same, hi_s, mid)
        s[stalled] = 0.5 * (lo_s + hi_s)
    return s


def find_intersection(x1, x2, ls: LevelSet, tol: float = 1e-12) -> float:
    """``t`` in [0, 1] with ``H(t x1 + (1 - t) x2) = 0``.

    A segment without a sign change is sampled on four sub-intervals; the
    crossing closest to ``x1`` is returned when a double crossing is found.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    ts = np.linspace(0.0, 1.0, SUBDIVISIONS + 1)
    pts = x2[None, :] + ts[:, None] * (x1 - x2)[None, :]
    inside = _inside(ls(pts[:, 0], pts[:, 1]))
    changes = np.nonzero(inside[1:] != inside[:-1])[0]
    if len(changes) == 0:
        raise GeometryError("no intersection on segment")
    k = changes[-1]
    s = _roots(ls, pts[k : k + 1], pts[k + 1 : k + 2], tol)[0]
    t = ts[k] + s * (ts[k + 1] - ts[k])
    p = x2 + t * (x1 - x2)
    if abs(ls(p[0], p[1])) > tol:
        raise GeometryError("degenerate crossing")
    return float(t)


@dataclass
class Geometry:
    """Disjoint interface components; component ``k`` has region id ``k + 1``."""

    components: list[LevelSet]

    def __post_init__(self):
        if not self.components:
            raise GeometryError("geometry needs at least one interface component")

    @property
    def n_components(self) -> int:
        return len(self.components)

    def region_ids(self, X, Y) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        region = np.zeros(X.shape, dtype=int)
        owners = np.zeros(X.shape, dtype=int)
        for k, ls in enumerate(self.components):
            inside = _inside(ls(X, Y))
            owners += inside
            region[inside] = k + 1
        if np.any(owners > 1):
            raise GeometryError("interface components overlap")
        return region

    def segment_crossings(self, p: np.ndarray, q: np.ndarray) -> list[list[tuple[float, int]]]:
        """All crossings on the segments ``p -> q``, as ``(t, region id)`` with ``t`` from p."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        q = np.atleast_2d(np.asarray(q, dtype=float))
        out: list[list[tuple[float, int]]] = [[] for _ in range(len(p))]
        ts = np.linspace(0.0, 1.0, SUBDIVISIONS + 1)
        pts = p[:, None, :] + ts[None, :, None] * (q - p)[:, None, :]
        for k, ls in enumerate(self.components):
            inside = _inside(ls(pts[..., 0], pts[..., 1]))
            seg, sub = np.nonzero(inside[:, 1:] != inside[:, :-1])
            if len(seg) == 0:
                continue
            s = _roots(ls, pts[seg, sub], pts[seg, sub + 1])
            t = ts[sub] + s * (ts[1] - ts[0])
            for a, b in zip(seg, t):
                out[a].append((float(b), k + 1))
        for recs in out:
            recs.sort()
        return out


@dataclass
class SurfaceMesh:
    """The discrete interface: grid-line crossings and their families.

    ``family`` 0 holds crossings of lines parallel to the x-axis (normal
    mostly along x, parameterized by y); family 1 the lines parallel to the
    y-axis. ``line`` is the index of the host grid line and ``s`` the
    position along it.
    """

    grid: Grid2D
    x: np.ndarray
    y: np.ndarray
    nx: np.ndarray
    ny: np.ndarray
    comp: np.ndarray
    family: np.ndarray
    line: np.ndarray
    alpha: float
    _chains: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return len(self.x)

    @property
    def points(self) -> np.ndarray:
        return np.stack([self.x, self.y], axis=1)

    @property
    def normals(self) -> np.ndarray:
        return np.stack([self.nx, self.ny], axis=1)

    @property
    def s(self) -> np.ndarray:
        return np.where(self.family == 0, self.x, self.y)

    @property
    def ref(self) -> np.ndarray:
        """Reference-plane coordinate: the coordinate along the other axis."""
        return np.where(self.family == 0, self.y, self.x)

    def indices_of(self, comp: int) -> np.ndarray:
        return np.nonzero(self.comp == comp)[0]

    @cached_property
    def trees(self) -> dict[int, tuple[cKDTree, np.ndarray]]:
        out = {}
        for c in np.unique(self.comp):
            idx = self.indices_of(c)
            out[int(c)] = (cKDTree(self.points[idx]), idx)
        return out

    def nearest(self, xy: np.ndarray, comp) -> tuple[np.ndarray, np.ndarray]:
        """Nearest surface point of the given component(s); ties go to the lowest index."""
        xy = np.atleast_2d(xy)
        comp = np.broadcast_to(np.asarray(comp), (len(xy),))
        idx = np.empty(len(xy), dtype=int)
        dist = np.empty(len(xy))
        for c in np.unique(comp):
            sel = comp == c
            tree, members = self.trees[int(c)]
            k = min(2, len(members))
            d, j = tree.query(xy[sel], k=k)
            if k == 1:
                d, j = d[:, None], j[:, None]
            cand = members[j]
            tie = (k == 2) & np.isclose(d[:, 0], d[:, -1], rtol=1e-14, atol=0.0)
            pick = np.where(tie, cand.min(axis=1), cand[:, 0])
            idx[sel] = pick
            dist[sel] = d[:, 0]
        return idx, dist

    @cached_property
    def links(self) -> tuple[np.ndarray, np.ndarray]:
        """Next/previous point along the same family branch (-1 where none)."""
        h = self.grid.h
        up = np.full(self.size, -1)
        down = np.full(self.size, -1)
        nr = np.where(self.family == 0, self.nx, self.ny)
        sign = np.sign(nr)
        groups: dict[tuple, list[int]] = {}
        for i in range(self.size):
            groups.setdefault((int(self.comp[i]), int(self.family[i]), int(self.line[i])), []).append(i)
        s = self.s
        best_up = np.full(self.size, -1)
        best_down = np.full(self.size, -1)
        for i in range(self.size):
            key = (int(self.comp[i]), int(self.family[i]))
            for step, best in ((1, best_up), (-1, best_down)):
                cands = groups.get(key + (int(self.line[i]) + step,), [])
                cands = [j for j in cands if sign[j] == sign[i] and abs(s[j] - s[i]) <= 2 * h]
                if cands:
                    best[i] = min(cands, key=lambda j: (abs(s[j] - s[i]), j))
        for i in range(self.size):
            j = best_up[i]
            if j >= 0 and best_down[j] == i:
                up[i] = j
                down[j] = i
        return up, down

    def chain(self, i: int, reach: int) -> tuple[list[int], int]:
        """Up to ``reach`` points either side of ``i`` along its branch, in line order."""
        up, down = self.links
        before, j = [], i
        for _ in range(reach):
            j = down[j]
            if j < 0:
                break
            before.append(int(j))
        after, j = [], i
        for _ in range(reach):
            j = up[j]
            if j < 0:
                break
            after.append(int(j))
        return before[::-1] + [i] + after, len(before)


def local_parameterization(i: int, mesh: SurfaceMesh, count: int) -> np.ndarray:
    """``count`` surface points near point ``i`` on its component, ordered along the curve.

    The window is kept centred on ``i``: up to ``count // 2`` points are taken
    on each side from the same family branch (consecutive grid lines, so
    reference coordinates are ``h`` apart). Where the branch ends, that side
    continues with the nearest points of the other family lying beyond the
    branch end, at least ``h/2`` apart tangentially. One-sided windows are
    the last resort.
    """
    h = mesh.grid.h
    comp = mesh.comp[i]
    n_comp = int(np.sum(mesh.comp == comp))
    if count > n_comp:
        raise GeometryError(f"component {comp} has {n_comp} points, need {count}")
    if count == 1:
        return np.array([i])
    p = mesh.points[i]
    tangent = np.array([-mesh.ny[i], mesh.nx[i]])

    def tcoord(j):
        return float((mesh.points[j] - p) @ tangent)

    half = count // 2
    chain, pos = mesh.chain(i, half)
    chosen = list(chain)
    t_sel = [tcoord(j) for j in chosen]
    members = mesh.indices_of(comp)
    near = members[np.linalg.norm(mesh.points[members] - p, axis=1) <= 4 * h]
    near = [int(j) for j in near if j not in chosen and mesh.normals[j] @ mesh.normals[i] > 0]
    near.sort(key=lambda j: (abs(tcoord(j)), j))

    def admit(j):
        t = tcoord(j)
        if min(abs(t - ts) for ts in t_sel) < 0.5 * h:
            return False
        chosen.append(j)
        t_sel.append(t)
        return True

    for side in (-1.0, 1.0):
        have = [t for t in t_sel if t * side > 0]
        missing = half - len(have)
        reach = max((abs(t) for t in have), default=0.0)
        for j in near:
            if missing <= 0:
                break
            t = tcoord(j)
            if j not in chosen and t * side > 0 and abs(t) > reach and admit(j):
                reach = abs(t)
                missing -= 1
    if len(chosen) < count:
        longer, _ = mesh.chain(i, count - 1)
        for j in longer:
            if len(chosen) == count:
                break
            if j not in chosen:
                admit(int(j))
    for j in near:
        if len(chosen) >= count:
            break
        if j not in chosen:
            admit(j)
    if len(chosen) < count:
        raise GeometryError(f"only {len(chosen)} usable neighbors near surface point {i}")
    order = np.argsort(t_sel)
    picked = np.array(chosen)[order]
    if len(picked) > count:
        # keep the most central window
        k = int(np.searchsorted(np.sort(t_sel), 0.0))
        start = int(np.clip(k - count // 2, 0, len(picked) - count))
        picked = picked[start : start + count]
    return picked


def _line_crossings(ls: LevelSet, grid: Grid2D, axis: int):
    """Crossings of ``ls`` with all interior grid lines parallel to ``axis``."""
    h, n = grid.h, grid.n
    sub = (np.arange(SUBDIVISIONS * n + 1) / SUBDIVISIONS) * h
    along = (grid.lower[axis] + sub)[:, None]
    across = grid.lower[1 - axis] + np.arange(1, n) * h
    across = across[None, :]
    if axis == 0:
        X, Y = np.broadcast_arrays(along, across)
    else:
        Y, X = np.broadcast_arrays(along, across)
    inside = _inside(ls(X, Y))
    k, line = np.nonzero(inside[1:] != inside[:-1])
    if len(k) == 0:
        return np.empty((0, 2)), np.empty(0, dtype=int)
    a = np.stack([X[k, line], Y[k, line]], axis=1)
    b = np.stack([X[k + 1, line], Y[k + 1, line]], axis=1)
    s = _roots(ls, a, b)
    pts = a + s[:, None] * (b - a)
    return pts, line + 1


def build_surface_mesh(grid: Grid2D, geometry: Geometry, alpha: float = np.pi / 4) -> SurfaceMesh:
    """Intersect every component with the grid lines and sort points into families.

    A crossing on a line parallel to axis ``r`` is kept when its normal
    satisfies ``|n_r| > cos(alpha)`` or ``r`` is the dominant normal axis;
    ``alpha = pi/4`` gives the non-overlapping dominant-axis split.
    """
    if not (np.pi / 4 - 1e-12 <= alpha < np.pi / 2):
        raise GeometryError(f"alpha must lie in [pi/4, pi/2), got {alpha}")
    cols = {k: [] for k in ("x", "y", "nx", "ny", "comp", "family", "line")}
    for k, ls in enumerate(geometry.components):
        count = 0
        for axis in (0, 1):
            pts, line = _line_crossings(ls, grid, axis)
            if len(pts) == 0:
                continue
            nx, ny = ls.normal(pts[:, 0], pts[:, 1])
            nr, no = (nx, ny) if axis == 0 else (ny, nx)
            keep = (np.abs(nr) > np.cos(alpha)) | (np.abs(nr) >= np.abs(no))
            order = np.lexsort(((pts[:, axis])[keep], line[keep]))
            for key, vals in (
                ("x", pts[keep, 0]),
                ("y", pts[keep, 1]),
                ("nx", nx[keep]),
                ("ny", ny[keep]),
                ("comp", np.full(keep.sum(), k + 1)),
                ("family", np.full(keep.sum(), axis)),
                ("line", line[keep]),
            ):
                cols[key].append(vals[order])
            count += int(keep.sum())
        if count == 0:
            raise GridError(f"component {k + 1} is not resolved by the {grid.n}x{grid.n} grid")
    arrays = {k: np.concatenate(v) for k, v in cols.items()}
    return SurfaceMesh(
        grid,
        arrays["x"],
        arrays["y"],
        arrays["nx"],
        arrays["ny"],
        arrays["comp"].astype(int),
        arrays["family"].astype(int),
        arrays["line"].astype(int),
        alpha,
    )
