"""First-order implicit and IMEX time-stepping for variable-viscosity flow.

Six schemes are available, differing in how the viscous term is split:

================  ==============================  ==================================
kind              implicit velocity operator       explicit (right-hand side) term
================  ==============================  ==================================
mono_sd_implicit  2 nu_n grad^s u  (coupled)       none
mono_sd_naive     nu_n grad u                      -(nu_n grad^T u_n, grad w)
mono_sd_sqrt      nu_{n+1} grad u                  -(sqrt(nu_n nu_{n+1}) grad^T u_n, grad w)
mono_gl           nu_n grad u                      (grad^T u_n grad nu_n, w)
frac_sd_sqrt      nu_{n+1} grad u  (+ projection)  as mono_sd_sqrt
frac_gl           nu_n grad u      (+ projection)  as mono_gl
================  ==============================  ==================================

Monolithic schemes solve the velocity-pressure saddle point system with a
sparse LU factorisation.  Fractional-step schemes solve one scalar system
per velocity component (BiCGSTAB) followed by a pressure Poisson problem
(CG), using the extrapolated pressure ``2 p_n - p_{n-1}``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import Assembler, vector_block
from .fe import DofLayout
from .linalg import SolverConfig, SolverError, solve_or_raise
from .mesh import EDGE_TAGS
from .viscosity import grad_sup_norm, project_viscosity

log = logging.getLogger(__name__)

SCHEMES = ("mono_sd_implicit", "mono_sd_naive", "mono_sd_sqrt", "mono_gl", "frac_sd_sqrt", "frac_gl")
MONOLITHIC = SCHEMES[:4]
NEEDS_NEXT_VISCOSITY = ("mono_sd_sqrt", "frac_sd_sqrt")


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if self.N < 2 or int(self.N) != self.N:
            raise ValueError("a time grid needs an integer N >= 2 steps")
        if not self.T > 0:
            raise ValueError("final time must be positive")

    @property
    def tau(self) -> float:
        return self.T / self.N

    @classmethod
    def from_tau(cls, T: float, tau: float) -> "TimeGrid":
        N = round(T / tau)
        if N < 2 or abs(N * tau - T) > 1e-12 * T:
            raise ValueError(f"T={T} is not an integer multiple (>= 2) of tau={tau}")
        return cls(T, N)

    @classmethod
    def fit(cls, T: float, tau: float) -> "TimeGrid":
        """Exact ``T/tau`` steps when that is an integer, else the smallest N with ``T/N <= tau``."""
        N = round(T / tau)
        if abs(N * tau - T) > 1e-12 * T:
            N = math.ceil(T / tau)
        return cls(T, max(N, 2))


@dataclass
class SchemeState:
    u: np.ndarray
    p: np.ndarray
    p_prev: np.ndarray
    nu: np.ndarray
    t: float = 0.0
    step: int = 0
    info: dict = field(default_factory=dict)


class FlowProblem:
    """Discretised problem data shared by all schemes.

    Parameters
    ----------
    layout : DofLayout with the Dirichlet boundaries already flagged
    viscosity : a viscosity model from :mod:`imexflow.viscosity`
    boundary_velocity : ``f(tag, x, y, t) -> (ux, uy)`` for Dirichlet nodes,
        ``None`` for homogeneous data
    body_force : ``f(x, y, t) -> (fx, fy)`` or ``None``
    lagged_viscosity : allow the ``*_sqrt`` schemes with a velocity-dependent
        model by substituting ``nu_n`` for the unknown ``nu_{n+1}``
    convection : ``"default"`` (plain for monolithic, skew for fractional),
        ``"plain"`` or ``"skew"``
    """

    def __init__(
        self,
        layout: DofLayout,
        viscosity,
        boundary_velocity=None,
        body_force=None,
        rel_tolerance: float = 1e-10,
        max_iterations: int = 5000,
        lagged_viscosity: bool = False,
        convection: str = "default",
    ):
        self.layout = layout
        self.mesh = layout.mesh
        self.viscosity = viscosity
        self.boundary_velocity = boundary_velocity
        self.body_force = body_force
        self.lagged_viscosity = lagged_viscosity
        if convection not in ("default", "plain", "skew"):
            raise ValueError(f"unknown convection form {convection!r}")
        self.convection = convection
        self.direct = SolverConfig("direct_lu", max(rel_tolerance, 1e-10), 1)
        self.krylov_velocity = SolverConfig("bicgstab", rel_tolerance, max_iterations)
        self.krylov_pressure = SolverConfig("cg", rel_tolerance, max_iterations)
        self.projection_solver = SolverConfig("cg", min(rel_tolerance, 1e-12), max_iterations)

        asm = self.asm = Assembler(layout)
        self.M2 = asm.mass("q2")
        self.Mv = vector_block(self.M2)
        self.M1 = asm.mass("q1")
        self.B = asm.divergence()
        self.Lp = asm.pressure_laplacian()
        self._q1_mass_row = np.asarray(self.M1.sum(axis=0)).ravel()
        self.area = float(self._q1_mass_row.sum())

        n2, n1 = layout.n_q2, layout.n_q1
        self.free_v = ~layout.dirichlet_mask
        pmask = np.zeros(n1, dtype=bool)
        if layout.closed:
            pmask[layout.pressure_pin] = True
        else:
            # open boundaries fix the pressure increment on the natural boundary
            open_tags = self.mesh.tags() - layout.dirichlet_tags
            edges = self.mesh.edges_with(open_tags)
            pmask[np.unique(self.mesh.edge_vertices(edges))] = True
        self.fixed_dp = pmask
        self.pin_saddle = np.zeros(n1, dtype=bool)
        if layout.closed:
            self.pin_saddle[layout.pressure_pin] = True
        self.n2, self.n1 = n2, n1

    # -- data ---------------------------------------------------------------

    def dirichlet_values(self, t: float) -> np.ndarray:
        """Velocity vector holding the prescribed values on constrained DOFs, zero elsewhere."""
        g = np.zeros(2 * self.n2)
        if self.boundary_velocity is None:
            return g
        nodes = self.layout.dirichlet_nodes
        codes = self.layout.node_tag[nodes]
        xy = self.layout.q2_coords
        for code in np.unique(codes):
            sel = nodes[codes == code]
            ux, uy = self.boundary_velocity(EDGE_TAGS[code], xy[sel, 0], xy[sel, 1], t)
            g[sel] = ux
            g[sel + self.n2] = uy
        return g

    def load(self, t: float) -> np.ndarray:
        if self.body_force is None:
            return np.zeros(2 * self.n2)
        return self.asm.load(self.body_force, t)

    def viscosity_at(self, t: float, u: np.ndarray) -> np.ndarray:
        model = self.viscosity
        if model.velocity_dependent:
            return project_viscosity(u, model, self.asm, self.M1, self.projection_solver)
        return model.nodal(self.mesh.nodes, t)

    def next_viscosity(self, state: SchemeState, tau: float) -> np.ndarray:
        """``nu_{n+1}`` for the schemes that need it before the solve."""
        if self.viscosity.velocity_dependent:
            if not self.lagged_viscosity:
                raise ValueError(
                    "the *_sqrt schemes need nu_{n+1} in advance; "
                    f"{self.viscosity.kind} viscosity depends on the unknown velocity"
                )
            return state.nu
        return self.viscosity.nodal(self.mesh.nodes, state.t + tau)

    def zero_mean(self, p: np.ndarray) -> np.ndarray:
        return p - (self._q1_mass_row @ p) / self.area

    def initial_state(self, u0=None, t0: float = 0.0) -> SchemeState:
        u = np.zeros(2 * self.n2) if u0 is None else np.array(u0, dtype=float)
        z = np.zeros(self.n1)
        return SchemeState(u=u, p=z.copy(), p_prev=z.copy(), nu=self.viscosity_at(t0, u), t=t0)

    def convection_is_skew(self, kind: str) -> bool:
        if self.convection == "default":
            return kind not in MONOLITHIC
        return self.convection == "skew"

    def grad_sup_norm(self, nu) -> float:
        return grad_sup_norm(nu, self.mesh, self.asm.geo)

    def energy(self, u) -> float:
        return 0.5 * float(u @ (self.Mv @ u))


# -- velocity systems --------------------------------------------------------


def velocity_system(kind: str, state: SchemeState, problem: FlowProblem, tau: float, nu_next=None):
    """Implicit velocity operator and right-hand side of one step.

    Returns ``(A, rhs)`` with ``A`` of size ``2 n_q2`` (component-blocked).
    For fractional schemes the rhs includes the pressure extrapolation.
    """
    if kind not in SCHEMES:
        raise ValueError(f"unknown scheme {kind!r}")
    asm = problem.asm
    u, nu = state.u, state.nu
    C = asm.convection(u, skew=problem.convection_is_skew(kind))
    rhs = problem.Mv @ u / tau + problem.load(state.t + tau)

    if kind in NEEDS_NEXT_VISCOSITY:
        if nu_next is None:
            nu_next = problem.next_viscosity(state, tau)
        K = problem.M2 / tau + asm.scalar_diffusion(nu_next) + C
        rhs -= asm.transpose_coupling(np.sqrt(nu) * np.sqrt(nu_next)) @ u
    elif kind == "mono_sd_implicit":
        A = problem.Mv / tau + asm.sd_diffusion(nu) + vector_block(C)
        return A.tocsr(), rhs
    else:
        K = problem.M2 / tau + asm.scalar_diffusion(nu) + C
        if kind == "mono_sd_naive":
            rhs -= asm.transpose_coupling(nu) @ u
        else:
            rhs += asm.gl_coupling(nu, u)

    if kind not in MONOLITHIC:
        rhs += problem.B.T @ (2.0 * state.p - state.p_prev)
    return vector_block(K.tocsr()), rhs


def _eliminate(S, b, fixed, x_fixed):
    free = ~fixed
    S = S.tocsr()
    Sf = S[free]
    b_f = b[free] - Sf[:, fixed] @ x_fixed
    return Sf[:, free], b_f


def _solve_saddle(problem: FlowProblem, A, rhs, t_next: float):
    n2, n1 = problem.n2, problem.n1
    B = problem.B
    S = sp.bmat([[A, -B.T], [-B, None]], format="csr")
    b = np.concatenate([rhs, np.zeros(n1)])
    fixed = np.concatenate([problem.layout.dirichlet_mask, problem.pin_saddle])
    g = problem.dirichlet_values(t_next)
    x_fixed = np.concatenate([g[problem.layout.dirichlet_mask], np.zeros(problem.pin_saddle.sum())])
    S_ff, b_f = _eliminate(S, b, fixed, x_fixed)
    x = np.empty(2 * n2 + n1)
    x[fixed] = x_fixed
    x[~fixed], report = solve_or_raise(S_ff, b_f, problem.direct, what="saddle point system")
    u, p = x[: 2 * n2], x[2 * n2 :]
    if problem.layout.closed:
        p = problem.zero_mean(p)
    return u, p, report


def _advance(state: SchemeState, problem: FlowProblem, tau, u, p, p_prev, info):
    t = state.t + tau
    return SchemeState(
        u=u, p=p, p_prev=p_prev, nu=problem.viscosity_at(t, u), t=t, step=state.step + 1, info=info
    )


def _monolithic(kind, state, problem, tau, nu_next=None):
    A, rhs = velocity_system(kind, state, problem, tau, nu_next)
    u, p, report = _solve_saddle(problem, A, rhs, state.t + tau)
    return _advance(state, problem, tau, u, p, state.p, {"residual": report.final_residual})


def _fractional(kind, state, problem, tau, nu_next=None):
    A, rhs = velocity_system(kind, state, problem, tau, nu_next)
    n2 = problem.n2
    K = A[:n2, :n2]
    g = problem.dirichlet_values(state.t + tau)
    u = g.copy()
    iters = []
    for c in (0, 1):
        sl = slice(c * n2, (c + 1) * n2)
        fixed = problem.layout.dirichlet_mask[sl]
        K_ff, b_f = _eliminate(K, rhs[sl], fixed, g[sl][fixed])
        x0 = state.u[sl][~fixed]
        uc, report = solve_or_raise(K_ff, b_f, problem.krylov_velocity, x0, what=f"velocity component {c}")
        u[sl][~fixed] = uc
        iters.append(report.iterations)

    # tau (grad dp, grad q) = -(q, div u_{n+1})
    fixed = problem.fixed_dp
    L_ff, b_f = _eliminate(problem.Lp, -(problem.B @ u) / tau, fixed, np.zeros(fixed.sum()))
    dp = np.zeros(problem.n1)
    dp[~fixed], report = solve_or_raise(L_ff, b_f, problem.krylov_pressure, what="pressure Poisson")
    p = state.p + dp
    if problem.layout.closed:
        p = problem.zero_mean(p)
    info = {"velocity_iterations": iters, "pressure_iterations": report.iterations}
    new = _advance(state, problem, tau, u, p, state.p, info)
    if kind == "frac_gl":
        info["cfl_margin"] = tau * problem.grad_sup_norm(state.nu) ** 2 / (2.0 * problem.viscosity.nu_min)
    return new


def step_mono_sd_implicit(state, problem, tau):
    return _monolithic("mono_sd_implicit", state, problem, tau)


def step_mono_sd_naive(state, problem, tau):
    return _monolithic("mono_sd_naive", state, problem, tau)


def step_mono_sd_sqrt(state, problem, tau, nu_next=None):
    return _monolithic("mono_sd_sqrt", state, problem, tau, nu_next)


def step_mono_gl(state, problem, tau):
    return _monolithic("mono_gl", state, problem, tau)


def step_frac_sd_sqrt(state, problem, tau, nu_next=None):
    return _fractional("frac_sd_sqrt", state, problem, tau, nu_next)


def step_frac_gl(state, problem, tau):
    return _fractional("frac_gl", state, problem, tau)


STEPPERS = {
    "mono_sd_implicit": step_mono_sd_implicit,
    "mono_sd_naive": step_mono_sd_naive,
    "mono_sd_sqrt": step_mono_sd_sqrt,
    "mono_gl": step_mono_gl,
    "frac_sd_sqrt": step_frac_sd_sqrt,
    "frac_gl": step_frac_gl,
}


class RunAborted(RuntimeError):
    def __init__(self, step: int, cause: Exception, state: SchemeState):
        super().__init__(f"run aborted at step {step}: {cause}")
        self.step = step
        self.cause = cause
        self.state = state


def check_pairing(kind: str, problem: FlowProblem):
    if kind not in SCHEMES:
        raise ValueError(f"unknown scheme {kind!r}; expected one of {', '.join(SCHEMES)}")
    if kind in NEEDS_NEXT_VISCOSITY and problem.viscosity.velocity_dependent and not problem.lagged_viscosity:
        raise ValueError(f"{kind} needs a viscosity known in advance, got {problem.viscosity.kind}")


def run(kind: str, problem: FlowProblem, grid: TimeGrid, state=None, callbacks=(), steady_tol=None):
    """Advance ``grid.N`` steps of scheme ``kind``.

    Each callback is called as ``cb(state, problem)`` on the initial state and
    after every step.  With ``steady_tol`` the loop stops once the relative
    kinetic-energy change per step drops below it.  A solver failure or a
    non-finite solution raises :class:`RunAborted` carrying the step index.
    """
    check_pairing(kind, problem)
    stepper = STEPPERS[kind]
    state = state or problem.initial_state()
    for cb in callbacks:
        cb(state, problem)
    e_old = problem.energy(state.u)
    for n in range(grid.N):
        try:
            new = stepper(state, problem, grid.tau)
        except (SolverError, ValueError, FloatingPointError) as exc:
            raise RunAborted(n + 1, exc, state) from exc
        if not np.all(np.isfinite(new.u)) or not np.all(np.isfinite(new.p)):
            raise RunAborted(n + 1, FloatingPointError("non-finite solution"), state)
        state = new
        for cb in callbacks:
            cb(state, problem)
        e_new = problem.energy(state.u)
        if steady_tol is not None and e_new > 0 and abs(e_new - e_old) / e_new < steady_tol:
            log.info("steady state reached at t=%g", state.t)
            break
        e_old = e_new
    return state

