"""Structured quadrilateral meshes for the benchmark domains.

Elements are bilinear quadrilaterals with corners listed counter-clockwise.
Local edge ``k`` joins local corners ``k`` and ``(k + 1) % 4``, so on a
structured grid edge 0 is the bottom, 1 the right, 2 the top and 3 the left
side of the cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class BoundaryTag(str, Enum):
    LID = "lid"
    WALL = "wall"
    INLET = "inlet"
    OUTLET = "outlet"
    ALL = "all"

    @classmethod
    def parse(cls, value) -> "BoundaryTag":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown boundary tag {value!r}") from None


# Tags that may be attached to an edge; ``all`` only selects.
EDGE_TAGS = (BoundaryTag.LID, BoundaryTag.WALL, BoundaryTag.INLET, BoundaryTag.OUTLET)
_TAG_CODE = {tag: code for code, tag in enumerate(EDGE_TAGS)}


@dataclass(frozen=True, eq=False)
class Mesh:
    """Quadrilateral mesh with tagged boundary edges.

    Attributes
    ----------
    nodes : (n_nodes, 2) float array
    elements : (n_elements, 4) int array, counter-clockwise corners
    boundary_edges : (n_bedges, 3) int array of ``(element, local_edge, tag_code)``
    shape : ``(nx, ny)`` for structured grids; node ``(i, j)`` has index
        ``j * (nx + 1) + i``.
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary_edges: np.ndarray
    shape: tuple[int, int] | None = None
    name: str = field(default="mesh")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def edge_tag(self, k: int) -> BoundaryTag:
        return EDGE_TAGS[int(self.boundary_edges[k, 2])]

    def tags(self) -> set[BoundaryTag]:
        return {EDGE_TAGS[c] for c in np.unique(self.boundary_edges[:, 2])}

    def edges_with(self, tags) -> np.ndarray:
        """Rows of ``boundary_edges`` whose tag is in ``tags``."""
        tags = {BoundaryTag.parse(t) for t in tags}
        if BoundaryTag.ALL in tags:
            return self.boundary_edges
        codes = [_TAG_CODE[t] for t in tags]
        return self.boundary_edges[np.isin(self.boundary_edges[:, 2], codes)]

    def edge_vertices(self, edges: np.ndarray) -> np.ndarray:
        """Global vertex pairs ``(n, 2)`` of boundary edge rows."""
        el = self.elements[edges[:, 0]]
        k = edges[:, 1]
        a = el[np.arange(len(k)), k]
        b = el[np.arange(len(k)), (k + 1) % 4]
        return np.stack([a, b], axis=1)


def _structured(nx: int, ny: int, x: np.ndarray, y: np.ndarray, tags: dict[int, BoundaryTag], name: str) -> Mesh:
    nodes = np.column_stack([x.ravel(), y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    n0 = (j * (nx + 1) + i).ravel()
    elements = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])

    rows = []
    eid = np.arange(nx * ny).reshape(ny, nx)
    for edge, cells in ((0, eid[0, :]), (1, eid[:, -1]), (2, eid[-1, :]), (3, eid[:, 0])):
        code = _TAG_CODE[tags[edge]]
        rows.append(np.column_stack([cells, np.full_like(cells, edge), np.full_like(cells, code)]))
    return Mesh(nodes, elements.astype(np.int64), np.concatenate(rows).astype(np.int64), (nx, ny), name)


def _check_counts(nx, ny):
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"element counts must be positive integers, got ({nx}, {ny})")


def build_unit_square(nx: int, ny: int) -> Mesh:
    """Uniform grid of ``(0, 1)^2``; top edge tagged ``lid``, the rest ``wall``."""
    _check_counts(nx, ny)
    x, y = np.meshgrid(np.linspace(0.0, 1.0, nx + 1), np.linspace(0.0, 1.0, ny + 1), indexing="xy")
    tags = {0: BoundaryTag.WALL, 1: BoundaryTag.WALL, 2: BoundaryTag.LID, 3: BoundaryTag.WALL}
    return _structured(nx, ny, x, y, tags, "unit_square")


def sign(x):
    # sign(0) = 0 keeps the wall and ramp curves continuous.
    return np.sign(x)


def aneurysm_wall(x, H: float):
    """Height of the upper wall of the idealised aneurysm channel."""
    x = np.asarray(x, dtype=float)
    bracket = 1.0 - sign(np.abs(2.0 * x - 6.0 * H) - 3.0 * H)
    return H + 0.25 * H * bracket * np.cos(np.pi * (x - 3.0 * H) / (3.0 * H)) ** 2


def build_aneurysm(nx: int, ny: int, H: float) -> Mesh:
    """Channel ``x in [0, 6H]`` with a bulging upper wall.

    Top-row nodes sit exactly on the wall curve and interior rows are graded
    linearly between the flat bottom and the top.  ``x = 0`` is the inlet,
    ``x = 6H`` the outlet.
    """
    _check_counts(nx, ny)
    if not H > 0:
        raise ValueError(f"channel height must be positive, got {H}")
    xs = np.linspace(0.0, 6.0 * H, nx + 1)
    top = aneurysm_wall(xs, H)
    s = np.linspace(0.0, 1.0, ny + 1)
    x = np.broadcast_to(xs, (ny + 1, nx + 1)).copy()
    y = s[:, None] * top[None, :]
    tags = {0: BoundaryTag.WALL, 1: BoundaryTag.OUTLET, 2: BoundaryTag.WALL, 3: BoundaryTag.INLET}
    return _structured(nx, ny, x, y, tags, "aneurysm")


def corner_jacobians(mesh: Mesh) -> np.ndarray:
    """Jacobian determinants of the bilinear map at the four corners, ``(E, 4)``."""
    xy = mesh.nodes[mesh.elements]
    out = np.empty(xy.shape[:2])
    for k in range(4):
        e1 = xy[:, (k + 1) % 4] - xy[:, k]
        e2 = xy[:, (k - 1) % 4] - xy[:, k]
        # reference edges have length 2, hence the factor 1/4
        out[:, k] = 0.25 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return out


def element_areas(mesh: Mesh) -> np.ndarray:
    """Element areas by 2x2 Gauss quadrature of the mapped Jacobian (exact for bilinear maps)."""
    g = 1.0 / np.sqrt(3.0)
    xy = mesh.nodes[mesh.elements]
    area = np.zeros(mesh.n_elements)
    for xi in (-g, g):
        for eta in (-g, g):
            dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
            deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
            jx = xy.transpose(0, 2, 1) @ dxi
            je = xy.transpose(0, 2, 1) @ deta
            area += jx[:, 0] * je[:, 1] - jx[:, 1] * je[:, 0]
    return area
