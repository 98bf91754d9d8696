"""Viscosity models and their Q1 representation.

Generalised Newtonian viscosities depend on ``|grad^s u|`` and are brought
into the continuous Q1 space by L2 projection, then clipped from below at
the model minimum (projection can undershoot near steep layers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import Assembler, mesh_geometry
from .linalg import SolverConfig, solve_or_raise

# Named time functions usable from configuration files: value and derivative.
TIME_FUNCTIONS = {
    "sin2": (lambda t: np.sin(t) ** 2, lambda t: np.sin(2.0 * t)),
    "one": (lambda t: 1.0 + 0.0 * np.asarray(t), lambda t: 0.0 * np.asarray(t)),
    "zero": (lambda t: 0.0 * np.asarray(t), lambda t: 0.0 * np.asarray(t)),
}


class ViscosityStateError(RuntimeError):
    """An analytic viscosity evaluated to a non-positive value."""


def _check_shear(shear):
    shear = np.asarray(shear, dtype=float)
    if np.any(shear < 0):
        raise ValueError("shear rate must be non-negative")
    return shear


def eval_carreau(shear, nu0, nu_inf, lam, m):
    """``nu_inf + (nu0 - nu_inf) (1 + 2 lam^2 |grad^s u|^2)^(-m)``; ``shear`` is ``|grad^s u|``."""
    shear = _check_shear(shear)
    return nu_inf + (nu0 - nu_inf) * (1.0 + 2.0 * lam**2 * shear**2) ** (-m)


def eval_power_law(shear, kappa, n, floor):
    """``max(floor, kappa * s^(n-1))`` with ``s = |sqrt(2) grad^s u|``."""
    shear = _check_shear(shear)
    with np.errstate(divide="ignore"):
        eta = kappa * shear ** (n - 1.0)
    return np.maximum(floor, eta)


def eval_analytic(x, y, t, f, g):
    """``x y f(t) + g(t)``; ``f`` and ``g`` are callables or constants."""
    fv = f(t) if callable(f) else f
    gv = g(t) if callable(g) else g
    nu = np.asarray(x) * np.asarray(y) * fv + gv
    if np.any(nu <= 0):
        raise ViscosityStateError(f"analytic viscosity is non-positive at t={t}")
    return nu


@dataclass(frozen=True)
class ConstantViscosity:
    nu: float
    kind = "constant"
    velocity_dependent = False

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("viscosity must be positive")

    @property
    def nu_min(self):
        return self.nu

    def nodal(self, xy, t):
        return np.full(len(xy), float(self.nu))


@dataclass(frozen=True)
class AnalyticViscosity:
    """``nu(x, y, t) = x y f(t) + g`` with ``f`` a named time function."""

    f: str = "sin2"
    g: float = 0.001
    kind = "analytic"
    velocity_dependent = False

    def __post_init__(self):
        if self.f not in TIME_FUNCTIONS:
            raise ValueError(f"unknown time function {self.f!r}")
        if not self.g > 0:
            raise ValueError("g must be positive")

    @property
    def nu_min(self):
        # valid on the first quadrant for non-negative f
        return self.g

    @property
    def time_function(self):
        return TIME_FUNCTIONS[self.f]

    def nodal(self, xy, t):
        return eval_analytic(xy[:, 0], xy[:, 1], t, self.time_function[0], self.g)


@dataclass(frozen=True)
class CarreauViscosity:
    nu0: float
    nu_inf: float
    lam: float
    m: float
    kind = "carreau"
    velocity_dependent = True

    def __post_init__(self):
        if min(self.nu0, self.nu_inf, self.lam, self.m) <= 0:
            raise ValueError("Carreau parameters must be positive")

    @property
    def nu_min(self):
        return min(self.nu0, self.nu_inf)

    def eta(self, grad_u):
        return eval_carreau(sym_grad_norm(grad_u), self.nu0, self.nu_inf, self.lam, self.m)


@dataclass(frozen=True)
class PowerLawViscosity:
    kappa: float
    n: float
    floor: float = 1e-5
    kind = "power_law"
    velocity_dependent = True

    def __post_init__(self):
        if min(self.kappa, self.n, self.floor) <= 0:
            raise ValueError("power-law parameters and floor must be positive")

    @property
    def nu_min(self):
        return self.floor

    def eta(self, grad_u):
        return eval_power_law(math.sqrt(2.0) * sym_grad_norm(grad_u), self.kappa, self.n, self.floor)


ViscosityModel = ConstantViscosity | AnalyticViscosity | CarreauViscosity | PowerLawViscosity


def sym_grad_norm(grad_u):
    """Frobenius norm of the symmetric part of ``grad_u[..., 2, 2]``."""
    s = 0.5 * (grad_u + np.swapaxes(grad_u, -1, -2))
    return np.sqrt(np.sum(s * s, axis=(-1, -2)))


def project_viscosity(u, model, assembler: Assembler, mass_q1, solver=None, clip=True):
    """L2 projection of ``eta(|grad^s u_h|)`` onto Q1, clipped at ``model.nu_min``."""
    if not model.velocity_dependent:
        raise ValueError(f"{model.kind} viscosity does not depend on the velocity")
    solver = solver or SolverConfig("cg", 1e-12, 2000)
    eta = model.eta(assembler.velocity_grad_at_quad(u))
    b = assembler.q1_load(eta)
    nu, _ = solve_or_raise(mass_q1, b, solver, what="viscosity projection")
    if clip:
        nu = np.maximum(nu, model.nu_min)
    return nu


def grad_sup_norm(nu, mesh, geo=None) -> float:
    """Largest ``|grad nu_h|`` over all element quadrature points."""
    geo = geo or mesh_geometry(mesh)
    loc = np.asarray(nu, dtype=float)[mesh.elements]
    # basis gradients sum to zero, so shifting by one nodal value keeps
    # constants exactly gradient-free
    loc = loc - loc[:, :1]
    g = np.einsum("eqad,ea->eqd", geo.dN1, loc)
    return float(np.sqrt(np.max(np.sum(g * g, axis=-1))))
