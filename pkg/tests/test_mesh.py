import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from imexflow.mesh import (
    BoundaryTag,
    aneurysm_wall,
    build_aneurysm,
    build_unit_square,
    corner_jacobians,
    element_areas,
)

H = 2.5e-3


def test_single_cell():
    m = build_unit_square(1, 1)
    assert (m.n_nodes, m.n_elements, len(m.boundary_edges)) == (4, 1, 4)


def test_paper_cavity_mesh_size():
    assert build_unit_square(200, 200).n_elements == 40000


def test_uniform_spacing():
    m = build_unit_square(2, 1)
    assert m.n_elements == 2
    assert np.any(np.all(np.isclose(m.nodes, [0.5, 0.0]), axis=1))


@pytest.mark.parametrize("nx,ny", [(0, 1), (1, 0), (-2, 3)])
def test_invalid_counts(nx, ny):
    with pytest.raises(ValueError):
        build_unit_square(nx, ny)
    with pytest.raises(ValueError):
        build_aneurysm(nx, ny, H)


@pytest.mark.parametrize("bad_H", [0.0, -1e-3])
def test_aneurysm_rejects_bad_height(bad_H):
    with pytest.raises(ValueError):
        build_aneurysm(6, 2, bad_H)


def test_wall_curve_values():
    # the bracket equals 2 inside the bulge, so the apex is H + H/2
    assert aneurysm_wall(3 * H, H) == pytest.approx(1.5 * H, rel=1e-14)
    assert aneurysm_wall(0.0, H) == pytest.approx(H, rel=1e-14)
    assert aneurysm_wall(6 * H, H) == pytest.approx(H, rel=1e-14)
    # bulge edges at x = 1.5H and 4.5H: cos^2 vanishes there
    assert aneurysm_wall(1.5 * H, H) == pytest.approx(H, rel=1e-12)


def test_aneurysm_extent():
    m = build_aneurysm(12, 4, H)
    assert m.nodes[:, 0].max() == pytest.approx(0.015)
    assert m.nodes[:, 0].min() == 0.0
    assert m.nodes[:, 1].min() == 0.0


@pytest.mark.parametrize("nx,ny", [(1, 1), (3, 5), (16, 16)])
def test_square_area(nx, ny):
    assert element_areas(build_unit_square(nx, ny)).sum() == pytest.approx(1.0, rel=1e-12)


def test_aneurysm_area_against_quadrature():
    # straight-sided cells only approximate the curve; compare with the
    # piecewise linear interpolant of the wall integrated independently
    nx = 96
    m = build_aneurysm(nx, 4, H)
    xs = np.linspace(0, 6 * H, nx + 1)
    chord = np.interp
    ref, _ = quad(lambda x: chord(x, xs, aneurysm_wall(xs, H)), 0, 6 * H, points=xs[1:-1], limit=500)
    assert element_areas(m).sum() == pytest.approx(ref, rel=1e-12)
    exact, _ = quad(lambda x: aneurysm_wall(x, H), 0, 6 * H, points=[1.5 * H, 4.5 * H])
    assert exact == pytest.approx(6.75 * H**2, rel=1e-12)
    assert element_areas(build_aneurysm(960, 2, H)).sum() == pytest.approx(exact, rel=1e-5)


@pytest.mark.parametrize("mesh", [build_unit_square(5, 3), build_aneurysm(24, 6, H)], ids=["square", "aneurysm"])
def test_mesh_invariants(mesh):
    assert np.all(corner_jacobians(mesh) > 0)
    assert mesh.elements.min() >= 0 and mesh.elements.max() < mesh.n_nodes
    # boundary edges are unique and each carries one tag
    keys = {(e, k) for e, k, _ in mesh.boundary_edges}
    assert len(keys) == len(mesh.boundary_edges)
    # conforming: interior edges shared by exactly two elements, boundary edges by one
    el = mesh.elements
    edges = np.sort(np.stack([el, np.roll(el, -1, axis=1)], -1).reshape(-1, 2), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    assert set(counts) <= {1, 2}
    assert np.sum(counts == 1) == len(mesh.boundary_edges)


def test_tags():
    sq = build_unit_square(3, 3)
    assert sq.tags() == {BoundaryTag.LID, BoundaryTag.WALL}
    assert len(sq.edges_with([BoundaryTag.LID])) == 3
    an = build_aneurysm(6, 2, H)
    assert an.tags() == {BoundaryTag.INLET, BoundaryTag.OUTLET, BoundaryTag.WALL}
    inlet = np.unique(an.edge_vertices(an.edges_with(["inlet"])))
    assert np.allclose(an.nodes[inlet, 0], 0.0)


def test_tag_parse():
    assert BoundaryTag.parse(" Lid ") is BoundaryTag.LID
    with pytest.raises(ValueError):
        BoundaryTag.parse("symmetry")


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(1, 30), ny=st.integers(1, 12))
def test_aneurysm_jacobians_positive(nx, ny):
    assert np.all(corner_jacobians(build_aneurysm(nx, ny, H)) > 0)
