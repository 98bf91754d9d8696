"""Taylor-Hood Q2/Q1 finite element space on quadrilateral meshes.

Velocity unknowns are stored component-blocked: DOF ``c * n_q2 + i`` is
component ``c`` of Q2 node ``i``.  Q2 nodes are numbered vertices first,
then edge midpoints, then cell centres, so Q1 node ``i`` coincides with Q2
node ``i`` and pressure/viscosity fields live on the mesh vertices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import EDGE_TAGS, BoundaryTag, Mesh

# Reference coordinates of the local nodes on [-1, 1]^2.
Q1_NODES = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
Q2_NODES = np.array(
    [[-1, -1], [1, -1], [1, 1], [-1, 1], [0, -1], [1, 0], [0, 1], [-1, 0], [0, 0]], dtype=float
)

# Corner tags outrank edge-interior tags where two Dirichlet boundaries meet.
_TAG_PRIORITY = {BoundaryTag.WALL: 3, BoundaryTag.INLET: 2, BoundaryTag.LID: 1, BoundaryTag.OUTLET: 0}


def _lagrange2(t):
    t = np.asarray(t, dtype=float)
    vals = {-1: 0.5 * t * (t - 1.0), 0: 1.0 - t * t, 1: 0.5 * t * (t + 1.0)}
    ders = {-1: t - 0.5, 0: -2.0 * t, 1: t + 0.5}
    return vals, ders


def shape_values_q2(ref_point):
    """Biquadratic basis values and reference gradients.

    ``ref_point`` is ``(2,)`` or ``(P, 2)``; returns ``(..., 9)`` values and
    ``(..., 9, 2)`` gradients.
    """
    p = np.asarray(ref_point, dtype=float)
    xi, eta = p[..., 0], p[..., 1]
    lx, dx = _lagrange2(xi)
    ly, dy = _lagrange2(eta)
    vals, grads = [], []
    for a, b in Q2_NODES.astype(int):
        vals.append(lx[a] * ly[b])
        grads.append(np.stack([dx[a] * ly[b], lx[a] * dy[b]], axis=-1))
    return np.stack(vals, axis=-1), np.stack(grads, axis=-2)


def shape_values_q1(ref_point):
    """Bilinear basis values ``(..., 4)`` and reference gradients ``(..., 4, 2)``."""
    p = np.asarray(ref_point, dtype=float)
    xi, eta = p[..., 0], p[..., 1]
    vals, grads = [], []
    for a, b in Q1_NODES:
        fx, fy = 0.5 * (1 + a * xi), 0.5 * (1 + b * eta)
        vals.append(fx * fy)
        grads.append(np.stack([0.5 * a * fy, 0.5 * b * fx], axis=-1))
    return np.stack(vals, axis=-1), np.stack(grads, axis=-2)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def gauss_rule(n: int) -> QuadratureRule:
    """Tensor ``n x n`` Gauss-Legendre rule on the reference square (exact to degree ``2n - 1`` per direction)."""
    x, w = np.polynomial.legendre.leggauss(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    return QuadratureRule(np.column_stack([X.ravel(), Y.ravel()]), W.ravel(), 2 * n - 1)


@dataclass(frozen=True, eq=False)
class DofLayout:
    """Global numbering of the Q2 velocity and Q1 pressure/viscosity spaces.

    Attributes
    ----------
    q2_elements : (E, 9) global Q2 node indices per element
    q1_elements : (E, 4) global Q1 node indices per element
    q2_coords : (n_q2, 2) physical node positions
    node_tag : (n_q2,) code into :data:`EDGE_TAGS` of the Dirichlet boundary a node
        belongs to, ``-1`` if unconstrained
    dirichlet_mask : (2 * n_q2,) bool, constrained velocity DOFs
    pressure_pin : pressure DOF fixed to zero when the gauge is undetermined
    closed : True when every boundary edge carries a velocity Dirichlet condition,
        i.e. pressure is only defined up to a constant
    """

    mesh: Mesh
    q2_elements: np.ndarray
    q1_elements: np.ndarray
    q2_coords: np.ndarray
    node_tag: np.ndarray
    dirichlet_mask: np.ndarray
    pressure_pin: int
    closed: bool
    dirichlet_tags: frozenset = frozenset()

    @property
    def n_q2(self) -> int:
        return len(self.q2_coords)

    @property
    def n_q1(self) -> int:
        return self.mesh.n_nodes

    @property
    def velocity_dofs(self) -> int:
        return 2 * self.n_q2

    @property
    def pressure_dofs(self) -> int:
        return self.n_q1

    @property
    def dirichlet_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.node_tag >= 0)

    def interpolate_velocity(self, func) -> np.ndarray:
        """Nodal Q2 interpolant of ``func(x, y) -> (ux, uy)``."""
        ux, uy = func(self.q2_coords[:, 0], self.q2_coords[:, 1])
        out = np.empty(self.velocity_dofs)
        out[: self.n_q2] = ux
        out[self.n_q2 :] = uy
        return out

    def interpolate_scalar(self, func, space: str = "q1") -> np.ndarray:
        xy = self.mesh.nodes if space == "q1" else self.q2_coords
        return np.asarray(func(xy[:, 0], xy[:, 1]), dtype=float) * np.ones(len(xy))


def build_dof_layout(mesh: Mesh, dirichlet_tags=()) -> DofLayout:
    """Number Q2/Q1 DOFs and flag velocity DOFs on the given Dirichlet boundaries."""
    tags = {BoundaryTag.parse(t) for t in dirichlet_tags}
    if BoundaryTag.ALL in tags:
        tags = set(EDGE_TAGS)

    el = mesh.elements
    nv, ne = mesh.n_nodes, mesh.n_elements
    local_edges = np.stack([el, np.roll(el, -1, axis=1)], axis=-1)  # (E, 4, 2)
    keys = np.sort(local_edges.reshape(-1, 2), axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(ne, 4)
    n_edges = len(uniq)

    q2_elements = np.empty((ne, 9), dtype=np.int64)
    q2_elements[:, :4] = el
    q2_elements[:, 4:8] = nv + inv
    q2_elements[:, 8] = nv + n_edges + np.arange(ne)

    xy = mesh.nodes
    coords = np.concatenate([xy, 0.5 * (xy[uniq[:, 0]] + xy[uniq[:, 1]]), xy[el].mean(axis=1)])

    node_tag = np.full(len(coords), -1, dtype=np.int64)
    best = np.full(len(coords), -1)
    for row in mesh.boundary_edges:
        tag = EDGE_TAGS[row[2]]
        if tag not in tags:
            continue
        e, k = row[0], row[1]
        nodes = (q2_elements[e, k], q2_elements[e, (k + 1) % 4], q2_elements[e, 4 + k])
        for n in nodes:
            if _TAG_PRIORITY[tag] > best[n]:
                best[n] = _TAG_PRIORITY[tag]
                node_tag[n] = row[2]

    constrained = node_tag >= 0
    closed = bool(len(tags)) and mesh.tags() <= tags
    return DofLayout(
        mesh=mesh,
        q2_elements=q2_elements,
        q1_elements=el.copy(),
        q2_coords=coords,
        node_tag=node_tag,
        dirichlet_mask=np.concatenate([constrained, constrained]),
        pressure_pin=0,
        closed=closed,
        dirichlet_tags=frozenset(tags),
    )
