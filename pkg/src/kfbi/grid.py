"""Uniform Cartesian grid on a square box and node classification."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# 3x3 stencil offsets, center excluded
STENCIL_OFFSETS = tuple((r, s) for r in (-1, 0, 1) for s in (-1, 0, 1) if (r, s) != (0, 0))


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid2D:
    lower: tuple[float, float]
    upper: tuple[float, float]
    n: int

    @property
    def side(self) -> float:
        return self.upper[0] - self.lower[0]

    @property
    def h(self) -> float:
        return self.side / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n + 1, self.n + 1)

    @property
    def x(self) -> np.ndarray:
        return self.lower[0] + np.arange(self.n + 1) * self.h

    @property
    def y(self) -> np.ndarray:
        return self.lower[1] + np.arange(self.n + 1) * self.h

    def node(self, i, j):
        return self.lower[0] + i * self.h, self.lower[1] + j * self.h

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as ``(X, Y)`` arrays indexed ``[i, j]``."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def nearest_node(self, x, y):
        i = np.rint((np.asarray(x) - self.lower[0]) / self.h).astype(int)
        j = np.rint((np.asarray(y) - self.lower[1]) / self.h).astype(int)
        return np.clip(i, 0, self.n), np.clip(j, 0, self.n)

    def flat(self, i, j):
        return np.asarray(i) * (self.n + 1) + np.asarray(j)

    def unflat(self, k):
        return np.divmod(np.asarray(k), self.n + 1)


def build_grid(lower, upper, n: int) -> Grid2D:
    lower = (float(lower[0]), float(lower[1]))
    upper = (float(upper[0]), float(upper[1]))
    wx, wy = upper[0] - lower[0], upper[1] - lower[1]
    if wx <= 0 or wy <= 0:
        raise GridError(f"degenerate box {lower} -> {upper}")
    if not np.isclose(wx, wy, rtol=1e-12, atol=0.0):
        raise GridError(f"box must be square, got extents {wx} x {wy}")
    if int(n) != n or n < 8:
        raise GridError(f"need an integer N >= 8, got {n}")
    return Grid2D(lower, upper, int(n))


@dataclass
class NodeClassification:
    """Region ids and irregular flags of all grid nodes.

    ``region[i, j]`` is 0 outside every interface component and ``k >= 1``
    inside component ``k``. ``cuts`` maps a directed stencil pair
    ``(P, Q)`` of flat node indices with different regions to the list of
    ``(t, component)`` crossings along the segment from P (t=0) to Q (t=1).
    """

    grid: Grid2D
    region: np.ndarray
    irregular: np.ndarray
    cuts: dict = field(default_factory=dict)

    @property
    def irregular_nodes(self) -> np.ndarray:
        return np.argwhere(self.irregular)

    def counts(self) -> tuple[int, int]:
        inner = self.irregular[1:-1, 1:-1]
        return int(inner.size - inner.sum()), int(inner.sum())

    def cut_pairs(self):
        """Stencil pairs ``(P, Q, r, s)`` with P irregular and region(Q) != region(P)."""
        g = self.grid
        out = []
        for i, j in self.irregular_nodes:
            for r, s in STENCIL_OFFSETS:
                if self.region[i + r, j + s] != self.region[i, j]:
                    out.append((g.flat(i, j), g.flat(i + r, j + s), r, s))
        return out


def irregular_mask(region: np.ndarray) -> np.ndarray:
    """Interior nodes whose 9-point stencil touches another region."""
    n = region.shape[0] - 1
    mask = np.zeros(region.shape, dtype=bool)
    center = region[1:n, 1:n]
    for r, s in STENCIL_OFFSETS:
        mask[1:n, 1:n] |= region[1 + r : n + r, 1 + s : n + s] != center
    return mask


def classify_nodes(grid: Grid2D, geometry, record_cuts: bool = True) -> NodeClassification:
    """Region ids, irregular flags and stencil crossing records.

    ``geometry`` is anything with ``region_ids(X, Y)`` and
    ``segment_crossings(p, q)`` (see :class:`kfbi.geometry.Geometry`).
    """
    X, Y = grid.mesh()
    region = geometry.region_ids(X, Y)
    # box boundary nodes carry Dirichlet data and are never irregular
    if np.any(region[0, :]) or np.any(region[-1, :]) or np.any(region[:, 0]) or np.any(region[:, -1]):
        raise GridError("interface touches the box boundary; enlarge the box")
    irregular = irregular_mask(region)
    cls = NodeClassification(grid, region, irregular)
    if record_cuts and irregular.any():
        pairs = cls.cut_pairs()
        if pairs:
            P = np.array([p[0] for p in pairs])
            Q = np.array([p[1] for p in pairs])
            pi, pj = grid.unflat(P)
            qi, qj = grid.unflat(Q)
            p_xy = np.stack(grid.node(pi, pj), axis=-1)
            q_xy = np.stack(grid.node(qi, qj), axis=-1)
            crossings = geometry.segment_crossings(p_xy, q_xy)
            for idx, (p, q, _, _) in enumerate(pairs):
                cls.cuts[(int(p), int(q))] = crossings[idx]
    missing = sorted(set(range(1, geometry.n_components + 1)) - set(np.unique(region).tolist()))
    if missing:
        raise GridError(f"components {missing} contain no grid node; refine the grid")
    return cls
