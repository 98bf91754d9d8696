import numpy as np
import pytest
import scipy.sparse as sp

from imexflow.assembly import (
    Assembler,
    assemble_convection,
    assemble_divergence,
    assemble_gl_coupling,
    assemble_load,
    assemble_mass,
    assemble_pressure_laplacian,
    assemble_scalar_diffusion,
    assemble_sd_diffusion,
    assemble_transpose_coupling,
)
from imexflow.fe import build_dof_layout, gauss_rule, shape_values_q1, shape_values_q2
from imexflow.mesh import build_aneurysm, build_unit_square


@pytest.fixture(scope="module")
def cell():
    return build_dof_layout(build_unit_square(1, 1), [])


@pytest.fixture(scope="module")
def free4():
    lay = build_dof_layout(build_unit_square(4, 4), [])
    return lay, Assembler(lay)


def rel_sym_err(A):
    A = A.toarray()
    return np.abs(A - A.T).max() / np.abs(A).max()


def reference_sym_grad_energy(u, nu, layout, n=5):
    """Independent element loop: int 2 nu |grad^s u_h|^2 with an n x n rule."""
    rule = gauss_rule(n)
    mesh = layout.mesh
    total = 0.0
    for e in range(mesh.n_elements):
        xy = mesh.nodes[mesh.elements[e]]
        q2 = layout.q2_elements[e]
        for p, w in zip(rule.points, rule.weights):
            N1, G1 = shape_values_q1(p)
            _, G2 = shape_values_q2(p)
            J = xy.T @ G1
            dN = G2 @ np.linalg.inv(J)
            grad = np.array([dN.T @ u[q2], dN.T @ u[q2 + layout.n_q2]])  # grad[a, b] = d_b u_a
            S = 0.5 * (grad + grad.T)
            total += w * np.linalg.det(J) * 2.0 * (N1 @ nu[mesh.elements[e]]) * np.sum(S * S)
    return total


# -- mass ----------------------------------------------------------------------


def test_q1_mass_single_cell(cell):
    M = assemble_mass("q1", cell).toarray()
    assert M[0, 0] == pytest.approx(1 / 9, abs=1e-15)
    assert M[0, 1] == pytest.approx(1 / 18, abs=1e-15)
    # structured numbering: node 3 is the corner opposite node 0
    assert M[0, 2] == pytest.approx(1 / 18, abs=1e-15)
    assert M[0, 3] == pytest.approx(1 / 36, abs=1e-15)


@pytest.mark.parametrize("space", ["q1", "q2"])
def test_mass_total_and_spd(space, square2):
    layout, asm = square2
    M = asm.mass(space)
    assert M.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.linalg.eigvalsh(M.toarray()).min() > 0
    assert rel_sym_err(M) < 1e-13


# -- scalar diffusion --------------------------------------------------------------


def test_q1_diffusion_single_cell(cell):
    K = assemble_scalar_diffusion(np.ones(4), cell, space="q1").toarray()
    assert K[0, 0] == pytest.approx(2 / 3, abs=1e-15)
    assert K[0, 1] == pytest.approx(-1 / 6, abs=1e-15)
    assert K[0, 2] == pytest.approx(-1 / 6, abs=1e-15)
    assert K[0, 3] == pytest.approx(-1 / 3, abs=1e-15)


@pytest.mark.parametrize("space", ["q1", "q2"])
def test_diffusion_kernel_and_linearity(space, free4, rng):
    layout, asm = free4
    nu = rng.uniform(0.5, 2.0, layout.n_q1)
    K = asm.scalar_diffusion(nu, space)
    n = K.shape[0]
    assert np.abs(K @ np.ones(n)).max() < 1e-13
    assert np.abs((asm.scalar_diffusion(2 * nu, space) - 2 * K).toarray()).max() < 1e-14
    assert rel_sym_err(K) < 1e-13


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_diffusion_rejects_nonpositive(bad, free4):
    layout, asm = free4
    nu = np.ones(layout.n_q1)
    nu[3] = bad
    with pytest.raises(ValueError):
        asm.scalar_diffusion(nu)
    with pytest.raises(ValueError):
        asm.sd_diffusion(nu)


# -- SD and transpose coupling ---------------------------------------------------------


@pytest.mark.parametrize("mesh", [build_unit_square(2, 2), build_unit_square(4, 3), build_aneurysm(4, 2, 1.0)])
def test_sd_equals_laplacian_plus_transpose(mesh, rng):
    layout = build_dof_layout(mesh, [])
    asm = Assembler(layout)
    nu = rng.uniform(0.1, 3.0, layout.n_q1)
    L = asm.scalar_diffusion(nu)
    lhs = asm.sd_diffusion(nu)
    rhs = asm.transpose_coupling(nu) + sp.block_diag((L, L))
    assert np.abs((lhs - rhs).toarray()).max() <= 1e-12


def test_sd_annihilates_rotation(free4):
    layout, asm = free4
    A = asm.sd_diffusion(np.full(layout.n_q1, 0.7))
    u = layout.interpolate_velocity(lambda x, y: (-y, x))
    assert np.abs(A @ u).max() < 1e-12


@pytest.mark.parametrize("nu_kind", ["constant", "variable"])
def test_sd_energy_identity(nu_kind, free4, rng):
    layout, asm = free4
    nu = np.full(layout.n_q1, 0.3) if nu_kind == "constant" else rng.uniform(0.2, 1.0, layout.n_q1)
    u = rng.normal(size=layout.velocity_dofs)
    got = u @ (asm.sd_diffusion(nu) @ u)
    assert got == pytest.approx(reference_sym_grad_energy(u, nu, layout), rel=1e-12)


def test_sd_couples_components_scalar_does_not(free4, rng):
    layout, asm = free4
    n = layout.n_q2
    nu = rng.uniform(0.5, 1.5, layout.n_q1)
    A = asm.sd_diffusion(nu).toarray()
    assert np.abs(A[:n, n:]).max() > 1e-3
    assert rel_sym_err(asm.sd_diffusion(nu)) < 1e-13
    T = asm.transpose_coupling(nu).toarray()
    L = asm.scalar_diffusion(nu).toarray()
    assert np.abs(A[:n, n:] - T[:n, n:]).max() < 1e-14
    assert np.abs(A[:n, :n] - T[:n, :n] - L).max() < 1e-13


def test_transpose_coupling_shear(free4):
    layout, asm = free4
    T = asm.transpose_coupling(np.ones(layout.n_q1))
    u = layout.interpolate_velocity(lambda x, y: (y, 0 * x))
    w = layout.interpolate_velocity(lambda x, y: (0 * x, x))
    assert w @ (T @ u) == pytest.approx(1.0, abs=1e-13)


def test_transpose_coupling_zero_and_negative(free4):
    layout, asm = free4
    assert abs(asm.transpose_coupling(np.zeros(layout.n_q1))).max() == 0.0
    with pytest.raises(ValueError):
        asm.transpose_coupling(np.full(layout.n_q1, -1e-3))


# -- GL coupling ----------------------------------------------------------------------


def test_gl_trivial_cases(free4, rng):
    layout, asm = free4
    u = rng.normal(size=layout.velocity_dofs)
    assert np.abs(asm.gl_coupling(np.full(layout.n_q1, 2.0), u)).max() < 1e-12
    assert np.abs(asm.gl_coupling(rng.uniform(1, 2, layout.n_q1), np.zeros(layout.velocity_dofs))).max() == 0.0


def test_gl_load_pattern(free4):
    # nu = y, u = (0, x): (grad^T u) grad nu = (d_x u_y d_y nu, 0) = (1, 0)
    layout, asm = free4
    nu = layout.interpolate_scalar(lambda x, y: y)
    u = layout.interpolate_velocity(lambda x, y: (0 * x, x))
    load = asm.gl_coupling(nu, u)
    ref = asm.load(lambda x, y, t: (1.0, 0.0), 0.0)
    assert np.abs(load - ref).max() < 1e-14
    assert np.abs(asm.gl_coupling(layout.interpolate_scalar(lambda x, y: x), u)).max() < 1e-14


def test_gl_matches_transpose_coupling_by_parts():
    # for solenoidal u: (nu grad^T u, grad w) = -((grad^T u) grad nu, w) when w = 0 on the boundary
    layout = build_dof_layout(build_unit_square(4, 4), ["all"])
    asm = Assembler(layout)
    nu = layout.interpolate_scalar(lambda x, y: x * y + 1.0)
    u = layout.interpolate_velocity(lambda x, y: (y**2, 0 * x))
    r = asm.transpose_coupling(nu) @ u + asm.gl_coupling(nu, u)
    assert np.abs(r[~layout.dirichlet_mask]).max() < 1e-13


def test_gl_against_independent_quadrature(free4, rng):
    layout, asm = free4
    mesh = layout.mesh
    nu = rng.uniform(0.5, 1.5, layout.n_q1)
    u = rng.normal(size=layout.velocity_dofs)
    ref = np.zeros(layout.velocity_dofs)
    rule = gauss_rule(4)
    for e in range(mesh.n_elements):
        xy = mesh.nodes[mesh.elements[e]]
        q2 = layout.q2_elements[e]
        for p, w in zip(rule.points, rule.weights):
            _, G1 = shape_values_q1(p)
            N2, G2 = shape_values_q2(p)
            J = xy.T @ G1
            Jinv = np.linalg.inv(J)
            gnu = (G1 @ Jinv).T @ nu[mesh.elements[e]]
            dN = G2 @ Jinv
            grad = np.array([dN.T @ u[q2], dN.T @ u[q2 + layout.n_q2]])
            g = grad.T @ gnu
            wd = w * np.linalg.det(J)
            ref[q2] += wd * g[0] * N2
            ref[q2 + layout.n_q2] += wd * g[1] * N2
    assert np.abs(asm.gl_coupling(nu, u) - ref).max() < 1e-13


# -- convection --------------------------------------------------------------------


def test_convection_zero_advection(free4):
    layout, _ = free4
    C = assemble_convection(np.zeros(layout.velocity_dofs), layout)
    assert abs(C).max() == 0.0


@pytest.mark.parametrize("mesh", [build_unit_square(4, 4), build_aneurysm(6, 3, 1.0)], ids=["square", "aneurysm"])
def test_skew_convection_self_orthogonal(mesh, rng):
    layout = build_dof_layout(mesh, ["all"])
    asm = Assembler(layout)
    for _ in range(5):
        v = rng.normal(size=layout.velocity_dofs)
        w = rng.normal(size=layout.velocity_dofs)
        w[layout.dirichlet_mask] = 0.0
        C = assemble_convection(v, layout, skew=True)
        rel = abs(w @ (C @ w)) / (np.abs(C).sum(axis=1).max() * (w @ w))
        assert rel <= 1e-12


def test_convection_block_diagonal(free4, rng):
    layout, _ = free4
    n = layout.n_q2
    C = assemble_convection(rng.normal(size=layout.velocity_dofs), layout).toarray()
    assert np.array_equal(C[:n, :n], C[n:, n:])
    assert np.abs(C[:n, n:]).max() == 0.0


def test_plain_and_skew_agree_for_solenoidal(free4):
    layout, asm = free4
    v = layout.interpolate_velocity(lambda x, y: (-(y - 0.5), x - 0.5))
    d = (asm.convection(v, skew=True) - asm.convection(v, skew=False)).toarray()
    assert np.abs(d).max() < 1e-14


# -- divergence, pressure Laplacian, load ---------------------------------------------------


def test_divergence_examples(free4):
    layout, asm = free4
    B = assemble_divergence(layout)
    assert B.shape == (layout.n_q1, layout.velocity_dofs)
    assert np.abs(B @ layout.interpolate_velocity(lambda x, y: (y, x))).max() < 1e-14
    assert (B @ layout.interpolate_velocity(lambda x, y: (x, 0 * y))).sum() == pytest.approx(1.0, abs=1e-14)
    assert np.abs(B @ np.zeros(layout.velocity_dofs)).max() == 0.0
    # any solenoidal field in the Q2 space
    u = layout.interpolate_velocity(lambda x, y: (x**2 * y - y**2, -x * y**2 + x))
    assert np.abs(B @ u).max() < 1e-13


def test_pressure_laplacian(free4, cell):
    layout, asm = free4
    Lp = assemble_pressure_laplacian(layout)
    assert np.abs(Lp @ np.ones(layout.n_q1)).max() < 1e-13
    assert np.abs((Lp - asm.scalar_diffusion(np.ones(layout.n_q1), "q1")).toarray()).max() == 0.0
    L1 = assemble_pressure_laplacian(cell).toarray()
    assert L1[0, 0] == pytest.approx(2 / 3) and L1[0, 3] == pytest.approx(-1 / 3)
    assert rel_sym_err(Lp) < 1e-13


def test_load_vectors(free4):
    layout, _ = free4
    n = layout.n_q2
    assert np.all(assemble_load(lambda x, y, t: (0.0, 0.0), 0.0, layout) == 0.0)
    b = assemble_load(lambda x, y, t: (1.0, 0.0), 0.0, layout)
    assert b[:n].sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(b[n:] == 0.0)
    b = assemble_load(lambda x, y, t: (x, y), 0.0, layout)
    assert b[:n].sum() == pytest.approx(0.5, abs=1e-14)
    b2 = assemble_load(lambda x, y, t: (3 * x * t, 3 * y * t), 2.0, layout)
    assert np.allclose(b2, 6 * b, atol=1e-14)


def test_assembly_is_bit_reproducible(free4, rng):
    layout, _ = free4
    nu = rng.uniform(0.5, 1.5, layout.n_q1)
    A1 = Assembler(layout).sd_diffusion(nu)
    A2 = Assembler(layout).sd_diffusion(nu)
    assert np.array_equal(A1.data, A2.data) and np.array_equal(A1.indices, A2.indices)
    assert np.all(np.diff(A1.indices[A1.indptr[0] : A1.indptr[1]]) > 0)


def test_function_wrappers_match(free4, rng):
    layout, asm = free4
    nu = rng.uniform(0.5, 1.5, layout.n_q1)
    u = rng.normal(size=layout.velocity_dofs)
    assert np.array_equal(assemble_sd_diffusion(nu, layout).data, asm.sd_diffusion(nu).data)
    assert np.array_equal(assemble_transpose_coupling(nu, layout).data, asm.transpose_coupling(nu).data)
    assert np.array_equal(assemble_gl_coupling(nu, u, layout), asm.gl_coupling(nu, u))
