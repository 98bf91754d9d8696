"""Matrix and load-vector assembly for the Q2/Q1 discretisation.

All element integrals are vectorised over elements with :func:`numpy.einsum`.
Each sparsity pattern is built once per layout; assembling a matrix then
reduces to a single ``bincount`` into the stored CSR value array, which
fixes the summation order per entry and keeps results bit-reproducible.

Conventions: ``(grad u)_{ab} = d u_a / d x_b``, so ``(grad u) v`` is the
convective derivative, and the transpose-coupling form is
``(nu grad^T u, grad w) = int nu d_a u_b d_b w_a``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .fe import DofLayout, gauss_rule, shape_values_q1, shape_values_q2


@dataclass
class _Geometry:
    wdet: np.ndarray  # (E, Q) weight times Jacobian determinant
    X: np.ndarray  # (E, Q, 2) physical quadrature points
    N2: np.ndarray  # (Q, 9)
    dN2: np.ndarray  # (E, Q, 9, 2) physical gradients
    N1: np.ndarray  # (Q, 4)
    dN1: np.ndarray  # (E, Q, 4, 2)


def mesh_geometry(mesh: Mesh, n: int = 3) -> _Geometry:
    """Quadrature points, weights and physical basis gradients of every element."""
    rule = gauss_rule(n)
    N1, G1 = shape_values_q1(rule.points)
    N2, G2 = shape_values_q2(rule.points)
    xy = mesh.nodes[mesh.elements]  # (E, 4, 2)
    J = np.einsum("eai,qaj->eqij", xy, G1)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        raise ValueError("mesh has elements with non-positive Jacobian")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    return _Geometry(
        wdet=rule.weights[None, :] * det,
        X=np.einsum("qa,eai->eqi", N1, xy),
        N2=N2,
        dN2=np.einsum("qaj,eqji->eqai", G2, inv),
        N1=N1,
        dN1=np.einsum("qaj,eqji->eqai", G1, inv),
    )


class SparsityPattern:
    """CSR pattern of element-local blocks ``rows[e] x cols[e]``."""

    def __init__(self, rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int]):
        r = np.repeat(rows, cols.shape[1], axis=1).ravel()
        c = np.tile(cols, (1, rows.shape[1])).ravel()
        keys = r.astype(np.int64) * shape[1] + c
        uniq, self._inv = np.unique(keys, return_inverse=True)
        self.indices = (uniq % shape[1]).astype(np.int32)
        ur = uniq // shape[1]
        self.indptr = np.zeros(shape[0] + 1, dtype=np.int32)
        np.cumsum(np.bincount(ur, minlength=shape[0]), out=self.indptr[1:])
        self.shape = shape
        self.nnz = len(uniq)

    def assemble(self, local: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self._inv, weights=local.ravel(), minlength=self.nnz)
        A = sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)
        A.has_sorted_indices = True
        return A


def _check_positive(nu, what="viscosity", strict=True):
    nu = np.asarray(nu, dtype=float)
    bad = np.any(nu <= 0) if strict else np.any(nu < 0)
    if bad:
        raise ValueError(f"{what} must be {'positive' if strict else 'non-negative'} at every node")
    return nu


class Assembler:
    """Element integrals and global assembly on one :class:`DofLayout`."""

    def __init__(self, layout: DofLayout, quad_order: int = 3, convection_order: int = 4):
        self.layout = layout
        self.n2 = layout.n_q2
        self.n1 = layout.n_q1
        self.geo = mesh_geometry(layout.mesh, quad_order)
        # the convection integrand is of degree 6 per direction
        self.geo_conv = mesh_geometry(layout.mesh, convection_order)
        e2, e1 = layout.q2_elements, layout.q1_elements
        self.vec_dofs = np.concatenate([e2, e2 + self.n2], axis=1)  # (E, 18)
        self._patterns = {
            "q2": SparsityPattern(e2, e2, (self.n2, self.n2)),
            "q1": SparsityPattern(e1, e1, (self.n1, self.n1)),
            "vec": SparsityPattern(self.vec_dofs, self.vec_dofs, (2 * self.n2, 2 * self.n2)),
            "div": SparsityPattern(e1, self.vec_dofs, (self.n1, 2 * self.n2)),
        }

    # -- field evaluation at quadrature points ---------------------------

    def q1_at_quad(self, field, geo=None):
        geo = geo or self.geo
        return field[self.layout.q1_elements] @ geo.N1.T  # (E, Q)

    def q1_grad_at_quad(self, field, geo=None):
        geo = geo or self.geo
        return np.einsum("eqad,ea->eqd", geo.dN1, field[self.layout.q1_elements])

    def velocity_at_quad(self, u, geo=None):
        geo = geo or self.geo
        loc = u[self.vec_dofs].reshape(-1, 2, 9)
        return np.einsum("qj,ecj->eqc", geo.N2, loc)

    def velocity_grad_at_quad(self, u, geo=None):
        """``G[e, q, b, d] = d u_b / d x_d`` at quadrature points."""
        geo = geo or self.geo
        loc = u[self.vec_dofs].reshape(-1, 2, 9)
        return np.einsum("eqjd,ebj->eqbd", geo.dN2, loc)

    def pressure_at_quad(self, p, geo=None):
        return self.q1_at_quad(p, geo)

    def integrate(self, values, geo=None) -> float:
        geo = geo or self.geo
        return float(np.sum(geo.wdet * values))

    # -- vectors ----------------------------------------------------------

    def scatter_velocity(self, local):
        """Sum element contributions ``(E, 2, 9)`` into a velocity vector."""
        return np.bincount(self.vec_dofs.ravel(), weights=local.ravel(), minlength=2 * self.n2)

    def q1_load(self, values, geo=None):
        """``int g psi_a`` for ``g`` given at quadrature points ``(E, Q)``."""
        geo = geo or self.geo
        local = np.einsum("eq,qa->ea", geo.wdet * values, geo.N1)
        return np.bincount(self.layout.q1_elements.ravel(), weights=local.ravel(), minlength=self.n1)

    def load(self, f, t: float):
        geo = self.geo
        fx, fy = f(geo.X[..., 0], geo.X[..., 1], t)
        fq = np.stack(np.broadcast_arrays(fx, fy), axis=-1) * np.ones_like(geo.X)
        local = np.einsum("eq,eqd,qi->edi", geo.wdet, fq, geo.N2)
        return self.scatter_velocity(local)

    def gl_coupling(self, nu, u):
        """Load ``(grad^T u grad nu, w)`` with the element-wise gradient of the Q1 viscosity."""
        geo = self.geo
        gnu = self.q1_grad_at_quad(nu)
        gu = self.velocity_grad_at_quad(u)
        g = np.einsum("eqbd,eqb->eqd", gu, gnu)
        local = np.einsum("eq,eqd,qi->edi", geo.wdet, g, geo.N2)
        return self.scatter_velocity(local)

    # -- matrices ----------------------------------------------------------

    def mass(self, space: str = "q2") -> sp.csr_matrix:
        geo = self.geo
        N = geo.N2 if space == "q2" else geo.N1
        return self._patterns[space].assemble(np.einsum("eq,qi,qj->eij", geo.wdet, N, N))

    def scalar_diffusion(self, nu, space: str = "q2") -> sp.csr_matrix:
        nu = _check_positive(nu)
        geo = self.geo
        dN = geo.dN2 if space == "q2" else geo.dN1
        w = geo.wdet * self.q1_at_quad(nu)
        return self._patterns[space].assemble(np.einsum("eq,eqid,eqjd->eij", w, dN, dN))

    def transpose_coupling(self, weight) -> sp.csr_matrix:
        weight = _check_positive(weight, "coupling weight", strict=False)
        geo = self.geo
        w = geo.wdet * self.q1_at_quad(weight)
        local = np.einsum("eq,eqic,eqjd->edicj", w, geo.dN2, geo.dN2).reshape(-1, 18, 18)
        return self._patterns["vec"].assemble(local)

    def sd_diffusion(self, nu) -> sp.csr_matrix:
        nu = _check_positive(nu)
        geo = self.geo
        w = geo.wdet * self.q1_at_quad(nu)
        lap = np.einsum("eq,eqid,eqjd->eij", w, geo.dN2, geo.dN2)
        local = np.einsum("eq,eqic,eqjd->edicj", w, geo.dN2, geo.dN2)
        local[:, 0, :, 0, :] += lap
        local[:, 1, :, 1, :] += lap
        return self._patterns["vec"].assemble(local.reshape(-1, 18, 18))

    def convection(self, u_adv, skew: bool = False) -> sp.csr_matrix:
        """Scalar block of ``((grad u) v, w)``, plus ``1/2 (div v) u.w`` when ``skew``."""
        geo = self.geo_conv
        vq = self.velocity_at_quad(u_adv, geo)
        adv = np.einsum("eqc,eqjc->eqj", vq, geo.dN2)
        local = np.matmul((geo.wdet[..., None] * geo.N2).transpose(0, 2, 1), adv)
        if skew:
            div = np.einsum("eqcc->eq", self.velocity_grad_at_quad(u_adv, geo))
            local += np.einsum("eq,qi,qj->eij", 0.5 * geo.wdet * div, geo.N2, geo.N2)
        return self._patterns["q2"].assemble(local)

    def divergence(self) -> sp.csr_matrix:
        """``B[a, (c, j)] = (psi_a, d_c phi_j)``: rows pressure, columns velocity."""
        geo = self.geo
        local = np.einsum("eq,qa,eqjc->eacj", geo.wdet, geo.N1, geo.dN2).reshape(-1, 4, 18)
        return self._patterns["div"].assemble(local)

    def pressure_laplacian(self) -> sp.csr_matrix:
        return self.scalar_diffusion(np.ones(self.n1), "q1")


def vector_block(K) -> sp.csr_matrix:
    """Component-diagonal velocity operator ``diag(K, K)``."""
    return sp.block_diag((K, K), format="csr")


# Function-style entry points.  Each builds a throwaway Assembler; time loops
# should hold on to one instead.


def assemble_mass(space, layout, mesh=None):
    return Assembler(layout).mass(space)


def assemble_scalar_diffusion(nu, layout, mesh=None, space="q2"):
    return Assembler(layout).scalar_diffusion(nu, space)


def assemble_sd_diffusion(nu, layout, mesh=None):
    return Assembler(layout).sd_diffusion(nu)


def assemble_transpose_coupling(nu_weight, layout, mesh=None):
    return Assembler(layout).transpose_coupling(nu_weight)


def assemble_gl_coupling(nu, u_prev, layout, mesh=None):
    return Assembler(layout).gl_coupling(nu, u_prev)


def assemble_convection(u_adv, layout, mesh=None, skew=False):
    return vector_block(Assembler(layout).convection(u_adv, skew))


def assemble_divergence(layout, mesh=None):
    return Assembler(layout).divergence()


def assemble_pressure_laplacian(layout, mesh=None):
    return Assembler(layout).pressure_laplacian()


def assemble_load(f, t, layout, mesh=None):
    return Assembler(layout).load(f, t)
