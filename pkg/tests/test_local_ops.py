import numpy as np
import pytest

from tetopt.boundary import BoundaryKind, classify_boundary
from tetopt.generate import ellipsoid, random_ring, structured_cube
from tetopt.local_ops import (LengthPolicy, contract_edge, contract_short_edges, link_condition,
                              mean_edge_length, split_bad_tets, split_edge, split_long_edges,
                              split_tet)
from tetopt.generate import rand_cube
from tetopt.mesh import build_mesh, total_volume, validate
from tetopt import rbf

from conftest import CORNER


def test_length_policy_thresholds():
    p = LengthPolicy(2.0)
    assert p.short == 1.0 and p.long == 3.0


def test_split_interior_edge_doubles_ring():
    m = random_ring(5, np.random.default_rng(0), jitter=0.0)
    vol = total_volume(m)
    before = m.n_tets
    w = split_edge(m, 0, 1, 0.5 * (m.points[0] + m.points[1]))
    assert m.n_tets == 2 * before
    assert not m.has_edge(0, 1)
    assert m.has_edge(0, w) and m.has_edge(w, 1)
    validate(m)
    assert total_volume(m) == pytest.approx(vol)


def test_split_tet_one_to_four():
    m = build_mesh(CORNER, [[0, 1, 2, 3]])
    v = split_tet(m, 0)
    assert m.n_tets == 4 and v == 4
    assert np.allclose(m.points[v], 0.25)
    validate(m)
    assert total_volume(m) == pytest.approx(1 / 6)


def test_link_condition_single_tet_edge_fails():
    # contracting any edge of a lone tet collapses it; the boundary cone makes Lk differ
    m = build_mesh(CORNER, [[0, 1, 2, 3]])
    assert not link_condition(m, 0, 1)


def test_link_condition_interior_edge_of_cube():
    m = structured_cube(3)
    interior = [v for v in range(m.n_vertices) if v not in set(m.boundary_vertices())]
    u = interior[0]
    nbr = [v for t in m.vertex_tets[u] for v in m.tets[t] if v != u and v in interior]
    assert link_condition(m, u, nbr[0])


def test_contract_edge_removes_vertex():
    m = structured_cube(3)
    bnd = set(m.boundary_vertices())
    u = next(v for v in range(m.n_vertices) if v not in bnd)
    w = next(v for t in m.vertex_tets[u] for v in m.tets[t] if v != u)
    ring = len(m.vertex_tets[u] & m.vertex_tets[w])
    n0 = m.n_tets
    contract_edge(m, w, u)
    assert m.n_tets == n0 - ring
    assert len(m.vertex_tets[u]) == 0


def test_contract_short_edges_keeps_corners_and_volume():
    m = rand_cube(n_interior=60, n_face=6, n_edge=2, seed=3)
    geo = classify_boundary(m)
    corners = m.points[geo.kind == BoundaryKind.CORNER].copy()
    vol = total_volume(m)
    n = contract_short_edges(m, geo, LengthPolicy(mean_edge_length(m), contract_factor=0.6))
    assert n > 0
    vmap = m.compact()
    geo.remap(vmap)
    validate(m)
    assert total_volume(m) == pytest.approx(vol, rel=1e-12)
    assert len(geo) == m.n_vertices
    got = m.points[geo.kind == BoundaryKind.CORNER]
    assert sorted(map(tuple, got)) == sorted(map(tuple, corners))
    for v in range(m.n_vertices):
        assert geo.is_on_geometry(v, m.points[v], 1e-9)


def test_fix_boundary_contracts_only_interior():
    m = rand_cube(n_interior=60, n_face=6, n_edge=2, seed=4)
    geo = classify_boundary(m)
    b = m.points[geo.kind != BoundaryKind.FREE].copy()
    contract_short_edges(m, geo, LengthPolicy(mean_edge_length(m), contract_factor=0.7), fix_boundary=True)
    vmap = m.compact()
    geo.remap(vmap)
    assert sorted(map(tuple, m.points[geo.kind != BoundaryKind.FREE])) == sorted(map(tuple, b))


def test_split_long_edges_classifies_midpoints():
    m = structured_cube(2)
    geo = classify_boundary(m)
    vol = total_volume(m)
    n = split_long_edges(m, geo, policy=LengthPolicy(mean_edge_length(m), split_factor=1.01))
    assert n > 0
    validate(m)
    assert total_volume(m) == pytest.approx(vol)
    assert len(geo) == m.n_vertices
    for v in range(m.n_vertices):
        assert geo.is_on_geometry(v, m.points[v], 1e-12)
    # midpoints on cube edges are segment vertices, on faces facet vertices
    P = m.points
    on_cube_edge = np.sum(np.isclose(P, 0) | np.isclose(P, 1), axis=1) == 2
    assert np.all(geo.kind[on_cube_edge] == BoundaryKind.SEGMENT)


def test_split_long_edges_projects_onto_surface():
    m = ellipsoid(axes=(1, 1, 1), level=1, n_interior=20, seed=1)
    geo = classify_boundary(m, "curved")
    geo.surface = rbf.fit_mesh(m)
    n = split_long_edges(m, geo, geo.surface, LengthPolicy(mean_edge_length(m), split_factor=1.2))
    assert n > 0
    validate(m)
    new = np.nonzero(geo.kind == BoundaryKind.CURVED)[0]
    s = geo.surface.eval(m.points[new])
    assert np.max(np.abs(s)) <= 1e-6


def test_split_bad_tets_counts():
    m = structured_cube(2, perturb=0.4, seed=1)
    from tetopt.quality import tet_min_angles
    mins, _ = tet_min_angles(m)
    lim = float(np.median(mins))
    expect = int(np.sum(mins < lim))
    n0 = m.n_tets
    n = split_bad_tets(m, lim)
    assert n == expect
    assert m.n_tets == n0 + 3 * n
    validate(m)
