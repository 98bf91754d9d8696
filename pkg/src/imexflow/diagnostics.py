"""Reported quantities: energy, L2 errors, vortex centre, pressure drop, CFL bound."""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import Assembler
from .fe import DofLayout
from .mesh import BoundaryTag, Mesh
from .viscosity import grad_sup_norm

CHANNELS = ("energy", "error_u", "error_p", "delta_p", "cfl_margin")


class TimeSeries:
    """Time stamps plus named value channels of equal length."""

    def __init__(self, channels=()):
        self.times: list[float] = []
        self.channels: dict[str, list[float]] = {c: [] for c in channels}

    def append(self, t: float, **values):
        if self.times and t <= self.times[-1]:
            raise ValueError("time stamps must increase strictly")
        if not self.channels and not self.times:
            self.channels = {c: [] for c in values}
        if set(values) != set(self.channels):
            raise ValueError(f"expected channels {sorted(self.channels)}, got {sorted(values)}")
        self.times.append(float(t))
        for k, v in values.items():
            self.channels[k].append(float(v))

    def __len__(self):
        return len(self.times)

    def __getitem__(self, name) -> np.ndarray:
        return np.asarray(self.channels[name])


def kinetic_energy(u, mass) -> float:
    """``E = 1/2 u^T M u`` with the (vector) velocity mass matrix."""
    return 0.5 * float(u @ (mass @ u))


def l2_errors(u, p, exact_u, exact_p, t, layout: DofLayout, mesh: Mesh | None = None, assembler=None):
    """L2 norms of ``u_h - u(t)`` and ``p_h - p(t)``.

    The exact pressure is shifted to the mean of ``p_h`` first, so a discrete
    pressure differing from the exact one by a constant has zero error.
    ``exact_u(x, y, t) -> (ux, uy)``, ``exact_p(x, y, t) -> p``.
    """
    asm = assembler or Assembler(layout)
    geo = asm.geo
    X, Y = geo.X[..., 0], geo.X[..., 1]
    ux, uy = exact_u(X, Y, t)
    uh = asm.velocity_at_quad(u)
    eu = (uh[..., 0] - ux) ** 2 + (uh[..., 1] - uy) ** 2
    ph = asm.pressure_at_quad(p)
    pe = exact_p(X, Y, t) * np.ones_like(X)
    area = asm.integrate(np.ones_like(X))
    shift = (asm.integrate(ph) - asm.integrate(pe)) / area
    ep = (ph - pe - shift) ** 2
    return math.sqrt(max(asm.integrate(eu), 0.0)), math.sqrt(max(asm.integrate(ep), 0.0))


class NoVortexError(ValueError):
    pass


def streamfunction(u, layout: DofLayout, assembler=None) -> np.ndarray:
    """Q1 stream function: ``(grad psi, grad q) = (curl u, q)``, ``psi = 0`` on the boundary."""
    asm = assembler or Assembler(layout)
    G = asm.velocity_grad_at_quad(u)
    b = asm.q1_load(G[..., 1, 0] - G[..., 0, 1])
    mesh = layout.mesh
    bnodes = np.unique(mesh.edge_vertices(mesh.boundary_edges))
    free = np.ones(layout.n_q1, dtype=bool)
    free[bnodes] = False
    L = asm.pressure_laplacian().tocsr()[free][:, free]
    psi = np.zeros(layout.n_q1)
    if np.any(b[free]):
        psi[free] = spla.spsolve(L.tocsc(), b[free])
    return psi


def locate_primary_vortex(u, layout: DofLayout, mesh: Mesh | None = None, assembler=None):
    """Centre of the dominant recirculation, from the extremum of the stream function.

    The extremal vertex is refined by interpolating a biquadratic through the
    surrounding 3x3 vertex patch and locating its stationary point.
    """
    mesh = layout.mesh
    if mesh.shape is None:
        raise ValueError("vortex location needs a structured mesh")
    psi = streamfunction(u, layout, assembler)
    scale = np.max(np.abs(psi))
    if not scale > 0:
        raise NoVortexError("velocity field has no circulation")
    k = int(np.argmax(np.abs(psi)))
    nx, ny = mesh.shape
    i, j = k % (nx + 1), k // (nx + 1)
    i = min(max(i, 1), nx - 1)
    j = min(max(j, 1), ny - 1)
    idx = [(jj * (nx + 1) + ii) for jj in (j - 1, j, j + 1) for ii in (i - 1, i, i + 1)]
    xy = mesh.nodes[idx]
    x0, y0 = mesh.nodes[j * (nx + 1) + i]
    hx = max(np.ptp(xy[:, 0]) / 2, 1e-300)
    hy = max(np.ptp(xy[:, 1]) / 2, 1e-300)
    s, r = (xy[:, 0] - x0) / hx, (xy[:, 1] - y0) / hy
    V = np.column_stack([s**a * r**b for a in range(3) for b in range(3)])
    c = np.linalg.solve(V, psi[idx] / scale).reshape(3, 3)  # c[a, b] multiplies s^a r^b

    def grad_hess(s, r):
        ps, pr = [1, s, s * s], [1, r, r * r]
        ds, dr = [0, 1, 2 * s], [0, 1, 2 * r]
        d2s, d2r = [0, 0, 2], [0, 0, 2]
        g = np.array([sum(c[a, b] * ds[a] * pr[b] for a in range(3) for b in range(3)),
                      sum(c[a, b] * ps[a] * dr[b] for a in range(3) for b in range(3))])
        H = np.array([[sum(c[a, b] * d2s[a] * pr[b] for a in range(3) for b in range(3)),
                       sum(c[a, b] * ds[a] * dr[b] for a in range(3) for b in range(3))],
                      [0.0, sum(c[a, b] * ps[a] * d2r[b] for a in range(3) for b in range(3))]])
        H[1, 0] = H[0, 1]
        return g, H

    p = np.zeros(2)
    for _ in range(30):
        g, H = grad_hess(*p)
        try:
            dp = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        p = np.clip(p + dp, -1.0, 1.0)
        if np.linalg.norm(dp) < 1e-14:
            break
    return float(x0 + hx * p[0]), float(y0 + hy * p[1])


def boundary_integral(p, mesh: Mesh, tag) -> float:
    """``int_Gamma_tag p dGamma`` of a Q1 field (exact edge-wise trapezoid)."""
    edges = mesh.edges_with([tag])
    if len(edges) == 0:
        raise ValueError(f"mesh has no {BoundaryTag.parse(tag).value} boundary")
    ab = mesh.edge_vertices(edges)
    length = np.linalg.norm(mesh.nodes[ab[:, 1]] - mesh.nodes[ab[:, 0]], axis=1)
    return float(np.sum(0.5 * length * (p[ab[:, 0]] + p[ab[:, 1]])))


def pressure_drop(p, mesh: Mesh, H: float) -> float:
    """Mean pressure drop ``(int_in p - int_out p) / H``."""
    return (boundary_integral(p, mesh, BoundaryTag.INLET) - boundary_integral(p, mesh, BoundaryTag.OUTLET)) / H


def cfl_limit(nu, nu_min: float, mesh: Mesh) -> float:
    """Time-step bound ``2 nu_min / ||grad nu||_inf^2`` of the fractional-step GL scheme."""
    g = grad_sup_norm(nu, mesh)
    if g == 0.0:
        return math.inf
    return 2.0 * nu_min / g**2
