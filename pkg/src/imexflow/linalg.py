"""Linear solvers: Jacobi-preconditioned CG and BiCGSTAB, and sparse LU.

Matrices are :class:`scipy.sparse.csr_matrix`; vectors are 1-d float arrays.
Krylov solvers report non-convergence instead of raising, callers decide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

METHODS = ("cg", "bicgstab", "direct_lu")


class SolverError(RuntimeError):
    """A linear solve failed to converge or broke down."""


@dataclass(frozen=True)
class SolverConfig:
    method: str = "direct_lu"
    rel_tolerance: float = 1e-10
    max_iterations: int = 5000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}")
        if not 0.0 < self.rel_tolerance < 1.0:
            raise ValueError("rel_tolerance must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape} times vector {x.shape}")
    return A @ x


def _jacobi(A):
    d = np.asarray(A.diagonal(), dtype=float)
    d[d == 0.0] = 1.0
    return 1.0 / d


def _cg(A, b, x, tol, maxit):
    dinv = _jacobi(A)
    bnorm = np.linalg.norm(b)
    r = b - A @ x
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return x, SolveReport(0, res, True)
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for k in range(1, maxit + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            return x, SolveReport(k, res, False)
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            # the recursive residual can drift (e.g. on inconsistent singular
            # systems); only the true residual counts
            r = b - A @ x
            res = np.linalg.norm(r) / bnorm
            if res <= tol:
                return x, SolveReport(k, res, True)
            z = dinv * r
            p = z.copy()
            rz = r @ z
            continue
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(maxit, res, False)


def _bicgstab(A, b, x, tol, maxit):
    dinv = _jacobi(A)
    bnorm = np.linalg.norm(b)
    r = b - A @ x
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return x, SolveReport(0, res, True)
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    for k in range(1, maxit + 1):
        rho_new = r_hat @ r
        if rho_new == 0.0 or omega == 0.0:
            return x, SolveReport(k, res, False)
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        y = dinv * p
        v = A @ y
        alpha = rho / (r_hat @ v)
        s = r - alpha * v
        if np.linalg.norm(s) / bnorm <= tol:
            x = x + alpha * y
            r = s
            res = np.linalg.norm(b - A @ x) / bnorm
            return x, SolveReport(k, res, res <= tol)
        z = dinv * s
        t = A @ z
        tt = t @ t
        omega = (t @ s) / tt if tt > 0 else 0.0
        x = x + alpha * y + omega * z
        r = s - omega * t
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            # recursive residual drifts; confirm with the true one
            res = np.linalg.norm(b - A @ x) / bnorm
            if res <= tol:
                return x, SolveReport(k, res, True)
            r = b - A @ x
    return x, SolveReport(maxit, res, False)


def solve(A, b, config: SolverConfig = SolverConfig(), x0=None):
    """Solve ``A x = b``; returns ``(x, SolveReport)``."""
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible system: matrix {A.shape}, rhs {b.shape}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True)
    A = sp.csr_matrix(A)
    if config.method == "direct_lu":
        try:
            x = spla.splu(A.tocsc()).solve(b)
        except RuntimeError:  # exactly singular factor
            return np.full_like(b, np.nan), SolveReport(1, np.inf, False)
        res = float(np.linalg.norm(b - A @ x) / bnorm)
        return x, SolveReport(1, res, bool(np.isfinite(res) and res <= config.rel_tolerance))
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    kernel = _cg if config.method == "cg" else _bicgstab
    return kernel(A, b, x, config.rel_tolerance, config.max_iterations)


def solve_or_raise(A, b, config: SolverConfig, x0=None, what="linear system"):
    x, report = solve(A, b, config, x0)
    if not report.converged:
        raise SolverError(
            f"{what}: {config.method} did not converge "
            f"(residual {report.final_residual:.3e} after {report.iterations} iterations)"
        )
    return x, report
