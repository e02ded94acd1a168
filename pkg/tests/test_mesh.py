import numpy as np
import pytest

from tetopt.errors import DegenerateCell, IndexOutOfRange, InvalidMesh, NotAnEdge
from tetopt.generate import structured_cube
from tetopt.mesh import (build_mesh, canonical_form, edge_matrices, edge_star, element_frame,
                         is_interior_edge, mesh_hash, orient3d, reference_edge_matrix,
                         signed_volumes, total_volume, validate)

from conftest import CORNER, REGULAR


def test_single_tet_has_four_boundary_faces():
    m = build_mesh(REGULAR, [[0, 1, 2, 3]])
    assert m.n_tets == 1
    assert len(m.boundary_faces()) == 4
    assert sum(1 for lst in m.faces.values() if len(lst) == 2) == 0
    validate(m)


def test_two_tets_sharing_a_face():
    pts = np.vstack([CORNER, [[1.0, 1.0, 1.0]]])
    m = build_mesh(pts, [[0, 1, 2, 3], [1, 2, 3, 4]])
    interior = [k for k, lst in m.faces.items() if len(lst) == 2]
    assert interior == [(1, 2, 3)]
    assert len(m.boundary_faces()) == 6


def test_negative_cell_is_reoriented():
    m = build_mesh(CORNER, [[0, 2, 1, 3]])
    assert m.tet_volume(0) == pytest.approx(1.0 / 6.0)


def test_repeated_vertex_is_degenerate():
    with pytest.raises(DegenerateCell):
        build_mesh(CORNER, [[0, 1, 1, 3]])


def test_flat_cell_is_degenerate():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
    with pytest.raises(DegenerateCell):
        build_mesh(pts, [[0, 1, 2, 3]])


def test_index_out_of_range():
    with pytest.raises(IndexOutOfRange):
        build_mesh(CORNER, [[0, 1, 2, 7]])


def test_duplicate_cell_rejected():
    with pytest.raises(InvalidMesh):
        build_mesh(CORNER, [[0, 1, 2, 3], [3, 2, 1, 0]])


def test_edge_star_of_five_ring():
    n = 5
    ang = 2 * np.pi * np.arange(n) / n
    pts = np.vstack([[[0, 0, 1.0], [0, 0, -1.0]], np.column_stack([np.cos(ang), np.sin(ang), np.zeros(n)])])
    m = build_mesh(pts, [[0, 1, 2 + i, 2 + (i + 1) % n] for i in range(n)])
    star = edge_star(m, 0, 1)
    assert star.closed and star.n == 5
    assert sorted(star.apexes) == [2, 3, 4, 5, 6]
    # consecutive ring cells share a face, including the closing pair
    for i in range(n):
        t0, t1 = star.tets[i], star.tets[(i + 1) % n]
        assert len(set(m.tets[t0]) & set(m.tets[t1])) == 3
    for i, t in enumerate(star.tets):
        assert set(m.tets[t]) == {0, 1, star.apexes[i], star.apexes[(i + 1) % n]}
    assert is_interior_edge(m, 0, 1)


def test_edge_star_open_fan_on_single_tet():
    m = build_mesh(CORNER, [[0, 1, 2, 3]])
    star = edge_star(m, 0, 1)
    assert not star.closed
    assert star.n == 1 and len(star.apexes) == 2
    assert not is_interior_edge(m, 0, 1)


def test_edge_star_not_an_edge():
    pts = np.vstack([CORNER, [[1.0, 1.0, 1.0]]])
    m = build_mesh(pts, [[0, 1, 2, 3], [1, 2, 3, 4]])
    with pytest.raises(NotAnEdge):
        edge_star(m, 0, 4)


def test_reference_matrix_volume():
    for n in (1, 7, 1000):
        Eh = reference_edge_matrix(n)
        assert np.linalg.det(Eh) / 6.0 == pytest.approx(1.0 / n, rel=1e-12)


def test_frame_of_reference_congruent_tet_is_identity():
    n = 1
    Eh = reference_edge_matrix(n)
    pts = np.vstack([np.zeros(3), Eh.T])
    m = build_mesh(pts, [[0, 1, 2, 3]])
    fr = element_frame(m, 0)
    assert np.allclose(fr.jacobian_inv, np.eye(3), atol=1e-12)
    assert fr.det_j == pytest.approx(1.0, rel=1e-12)


def test_frame_of_corner_tet():
    m = build_mesh(CORNER, [[0, 1, 2, 3]])
    fr = element_frame(m, 0)
    assert np.linalg.det(fr.edge_matrix) == pytest.approx(1.0)
    assert fr.volume == pytest.approx(1.0 / 6.0)
    assert np.allclose(fr.ref_edge_matrix @ np.linalg.inv(fr.edge_matrix) @ fr.edge_matrix,
                       fr.ref_edge_matrix, atol=1e-12)


def test_signed_volumes_match_orient3d(rng):
    pts = rng.normal(size=(10, 3))
    tets = rng.integers(0, 10, size=(20, 4))
    v = signed_volumes(pts, tets)
    for k, t in enumerate(tets):
        assert v[k] == pytest.approx(orient3d(*pts[t]) / 6.0, abs=1e-12)


def test_structured_cube_volume_and_validity():
    m = structured_cube(3, perturb=0.2, seed=4)
    validate(m)
    assert m.n_tets == 6 * 27
    assert total_volume(m) == pytest.approx(1.0, rel=1e-12)


def test_validate_detects_bad_incidence(cube3):
    cube3.vertex_tets[0].add(cube3.n_tets + 5)
    with pytest.raises((InvalidMesh, IndexError)):
        validate(cube3)


def test_compact_drops_tombstones(cube3):
    h = mesh_hash(cube3)
    t = cube3.tet_ids()[0]
    verts = cube3.remove_tet(t)
    cube3.add_tet(verts)
    vmap = cube3.compact()
    assert (vmap >= 0).all()
    assert len(cube3.tets) == cube3.n_tets
    assert mesh_hash(cube3) == h
    validate(cube3)


def test_canonical_form_ignores_cell_order():
    pts = np.vstack([CORNER, [[1.0, 1.0, 1.0]]])
    a = build_mesh(pts, [[0, 1, 2, 3], [1, 2, 3, 4]])
    b = build_mesh(pts, [[4, 3, 2, 1], [3, 2, 1, 0]])
    assert canonical_form(a) == canonical_form(b)
    assert mesh_hash(a) == mesh_hash(b)


def test_edge_matrices_columns():
    E = edge_matrices(CORNER, [[0, 1, 2, 3]])
    assert np.allclose(E[0], np.eye(3))


def test_hash_ignores_integer_type():
    pts = np.vstack([CORNER, [[1.0, 1.0, 1.0]]])
    a = build_mesh(pts, np.array([[0, 1, 2, 3], [1, 2, 3, 4]], dtype=np.int64))
    b = build_mesh(pts, [[0, 1, 2, 3], [1, 2, 3, 4]])
    assert mesh_hash(a) == mesh_hash(b)
