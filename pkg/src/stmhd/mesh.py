"""Structured triangular meshes of axis-aligned rectangles.

Every grid square is split along its lower-left/upper-right diagonal, so the
triangulation is deterministic and refinement amounts to halving the target
edge length. Boundary edges carry a geometric side tag.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    BOTTOM = "bottom"
    TOP = "top"


@dataclass(frozen=True)
class Mesh:
    """Triangulation of [x0,x1] x [y0,y1] into structured right triangles.

    Vertex (i, j) has index ``j*(nx+1) + i``; each cell contributes the two
    counterclockwise triangles (v00, v10, v11) and (v00, v11, v01).
    """

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int
    h: float
    vertices: np.ndarray  # (n_vertices, 2)
    triangles: np.ndarray  # (n_triangles, 3), counterclockwise
    boundary_facets: dict  # (v_lo, v_hi) -> Side

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / self.nx

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / self.ny

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def vertex_grid_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """(i, j) grid coordinates of every vertex."""
        v = np.arange(self.n_vertices)
        return v % (self.nx + 1), v // (self.nx + 1)

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def dump(self) -> str:
        """Plain-text dump (vertices / triangles / tags) for debugging."""
        lines = ["vertices"]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        lines.append("triangles")
        lines += [f"{a} {b} {c}" for a, b, c in self.triangles]
        lines.append("tags")
        lines += [f"{a} {b} {tag.value}" for (a, b), tag in sorted(self.boundary_facets.items())]
        return "\n".join(lines) + "\n"


def _cell_count(length: float, dx: float, label: str) -> int:
    n = length / dx
    n_round = round(n)
    if n_round < 1 or abs(n - n_round) > 1e-9 * max(1.0, abs(n)):
        raise ConfigurationError(
            f"extent {length} along {label} is not an integer multiple of dx={dx}"
        )
    return n_round


def build_rect_mesh(x0: float, x1: float, y0: float, y1: float, dx: float) -> Mesh:
    """Mesh the rectangle [x0,x1] x [y0,y1] with squares of side dx, each
    split into two triangles.

    Raises ConfigurationError if an extent does not divide evenly by dx.
    """
    if x1 <= x0 or y1 <= y0 or dx <= 0:
        raise ConfigurationError("rectangle extents and dx must be positive")
    nx = _cell_count(x1 - x0, dx, "x")
    ny = _cell_count(y1 - y0, dx, "y")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xg, yg = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([xg.ravel(), yg.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    triangles = np.asarray(tris, dtype=np.int64)

    facets: dict[tuple[int, int], Side] = {}
    for i in range(nx):
        facets[(vid(i, 0), vid(i + 1, 0))] = Side.BOTTOM
        facets[(vid(i, ny), vid(i + 1, ny))] = Side.TOP
    for j in range(ny):
        facets[(vid(0, j), vid(0, j + 1))] = Side.LEFT
        facets[(vid(nx, j), vid(nx, j + 1))] = Side.RIGHT

    return Mesh(x0, x1, y0, y1, nx, ny, dx, vertices, triangles, facets)
