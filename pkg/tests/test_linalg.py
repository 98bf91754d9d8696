import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from imexflow.assembly import Assembler
from imexflow.fe import build_dof_layout
from imexflow.linalg import SolverConfig, SolverError, solve, solve_or_raise, spmv
from imexflow.mesh import build_unit_square

A2 = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))


@pytest.mark.parametrize("method", ["cg", "bicgstab", "direct_lu"])
def test_identity(method, rng):
    b = rng.normal(size=7)
    x, rep = solve(sp.identity(7, format="csr"), b, SolverConfig(method))
    assert np.allclose(x, b)
    assert rep.converged and rep.iterations <= 1


@pytest.mark.parametrize("method", ["cg", "bicgstab", "direct_lu"])
def test_hand_solve(method):
    x, rep = solve(A2, np.array([3.0, 3.0]), SolverConfig(method))
    assert np.allclose(x, [1.0, 1.0], atol=1e-10)
    assert rep.converged and rep.final_residual <= 1e-10


def test_spmv_examples():
    x = np.array([1.0, 1.0])
    assert np.array_equal(spmv(sp.csr_matrix((2, 2)), x), [0.0, 0.0])
    assert np.array_equal(spmv(sp.identity(2, format="csr"), x), x)
    assert np.allclose(spmv(A2, x), [3.0, 3.0])
    with pytest.raises(ValueError):
        spmv(A2, np.ones(3))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_spmv_matches_dense(seed):
    r = np.random.default_rng(seed)
    A = sp.random(50, 50, density=0.1, random_state=r, format="csr")
    x = r.normal(size=50)
    assert np.allclose(spmv(A, x), A.toarray() @ x, rtol=0, atol=1e-13)


def _neumann_laplacian():
    lay = build_dof_layout(build_unit_square(4, 4), [])
    return Assembler(lay).pressure_laplacian()


def test_singular_laplacian_consistent_rhs(rng):
    L = _neumann_laplacian()
    b = rng.normal(size=L.shape[0])
    b -= b.mean()
    x, rep = solve(L, b, SolverConfig("cg", 1e-10, 500))
    assert rep.converged
    assert np.linalg.norm(L @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_singular_laplacian_inconsistent_rhs():
    L = _neumann_laplacian()
    b = np.ones(L.shape[0])
    _, rep = solve(L, b, SolverConfig("cg", 1e-10, 500))
    assert not rep.converged
    with pytest.raises(SolverError):
        solve_or_raise(L, b, SolverConfig("cg", 1e-10, 500))


def test_bicgstab_nonsymmetric(rng):
    n = 40
    A = sp.diags([-1.3, 4.0, -0.7], [-1, 0, 1], shape=(n, n), format="csr")
    b = rng.normal(size=n)
    x, rep = solve(A, b, SolverConfig("bicgstab", 1e-12, 200))
    assert rep.converged
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_singular_direct_reported():
    _, rep = solve(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])), np.array([1.0, 2.0]), SolverConfig())
    assert not rep.converged


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig("gmres")
    with pytest.raises(ValueError):
        SolverConfig("cg", 1.5)
    with pytest.raises(ValueError):
        SolverConfig("cg", 1e-8, 0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        solve(A2, np.ones(3))


def test_zero_rhs():
    x, rep = solve(A2, np.zeros(2), SolverConfig("cg"))
    assert np.all(x == 0) and rep.converged
