import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tetopt.errors import DegenerateCell, EmptyMesh
from tetopt.mesh import TetMesh, build_mesh, reference_edge_matrix
from tetopt.quality import (OPTIMAL_DIHEDRAL, EnergyParams, aspect_ratio, dihedral_angles,
                            energy, mesh_min_angle, mesh_stats, tet_quality)

from conftest import CORNER, REGULAR

# acos(1/3) in degrees, computed independently and frozen
REGULAR_ANGLE = 70.52877936550931


def test_optimal_dihedral_constant():
    assert OPTIMAL_DIHEDRAL == pytest.approx(REGULAR_ANGLE, abs=1e-12)


def test_regular_tet_angles_and_aspect():
    ang = dihedral_angles(REGULAR)
    assert np.allclose(ang, REGULAR_ANGLE, atol=1e-10)
    assert aspect_ratio(REGULAR) == pytest.approx(1.0, abs=1e-12)


def test_corner_tet_angles():
    ang = np.sort(dihedral_angles(CORNER))
    # three right angles at the origin edges, three of acos(1/sqrt 3)
    assert np.allclose(ang[:3], 54.735610317245346, atol=1e-10)
    assert np.allclose(ang[3:], 90.0, atol=1e-10)


def test_corner_tet_aspect_ratio():
    # longest edge sqrt 2, shortest altitude 1/sqrt 3
    assert aspect_ratio(CORNER) == pytest.approx(2.0, rel=1e-12)


def test_scalar_path_matches_vector_path(rng):
    for _ in range(50):
        P = rng.normal(size=(4, 3))
        lo, hi, ar = tet_quality(*P)
        ang = dihedral_angles(P)
        assert lo == pytest.approx(ang.min(), abs=1e-9)
        assert hi == pytest.approx(ang.max(), abs=1e-9)
        assert ar == pytest.approx(aspect_ratio(P), rel=1e-9)


def test_scalar_path_flat_cell():
    P = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]])
    lo, hi, ar = tet_quality(*P)
    assert lo == 0.0 and ar == math.inf


def test_zero_area_face_raises():
    P = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]])
    with pytest.raises(DegenerateCell):
        dihedral_angles(P)


def test_energy_of_reference_congruent_tet():
    # J = I: tr = 3, det J = 1, G = (1 - theta) 3^(9/4); the reference cell for n = 1 has |K| = 1
    Eh = reference_edge_matrix(1)
    m = build_mesh(np.vstack([np.zeros(3), Eh.T]), [[0, 1, 2, 3]])
    for theta in (1 / 3, 0.25, 0.5):
        prm = EnergyParams(theta=theta, p=1.5)
        expect = (1 - theta) * 3 ** 2.25
        assert energy(m, prm) == pytest.approx(expect, rel=1e-12)


def test_energy_scale_invariance_of_density():
    m = build_mesh(CORNER, [[0, 1, 2, 3]])
    prm = EnergyParams()
    e1 = energy(m, prm)
    m.set_points(2.0 * CORNER)
    e2 = energy(m, prm)
    # tr scales s^-2, det J s^-3, |K| s^3 : both terms scale as s^(3 - 3p)
    assert e2 / e1 == pytest.approx(2.0 ** (3 - 3 * prm.p), rel=1e-12)


@pytest.mark.parametrize("kw", [dict(theta=0.0), dict(theta=0.6), dict(p=1.0)])
def test_energy_params_validation(kw):
    with pytest.raises(ValueError):
        EnergyParams(**kw)


def test_stats_histogram_counts(cube3):
    s = mesh_stats(cube3)
    assert int(s.angle_counts.sum()) == 6 * cube3.n_tets
    assert int(s.ar_counts.sum()) == cube3.n_tets
    assert s.theta_min == pytest.approx(mesh_min_angle(cube3))
    assert s.theta_min <= s.mean <= s.theta_max


def test_stats_of_single_regular_tet():
    s = mesh_stats(build_mesh(REGULAR, [[0, 1, 2, 3]]))
    assert s.mean == pytest.approx(REGULAR_ANGLE, abs=1e-10)
    assert s.stddev == pytest.approx(0.0, abs=1e-10)
    assert s.n_tets == 1 and s.n_verts == 4


def test_empty_mesh():
    with pytest.raises(EmptyMesh):
        mesh_min_angle(TetMesh(CORNER))


def _rotation(q):
    q = q / np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


coords = arrays(np.float64, (4, 3), elements=st.floats(-2, 2, allow_nan=False))
quats = arrays(np.float64, 4, elements=st.floats(-1, 1)).filter(lambda q: np.linalg.norm(q) > 0.1)


@given(coords, quats, st.floats(0.1, 10.0))
def test_angles_invariant_under_similarity(P, q, s):
    lo, _, ar = tet_quality(*P)
    if ar > 1e4:
        return
    R = _rotation(q)
    Q = s * P @ R.T + 1.0
    assert np.allclose(np.sort(dihedral_angles(Q)), np.sort(dihedral_angles(P)), atol=1e-6)
    assert aspect_ratio(Q) == pytest.approx(aspect_ratio(P), rel=1e-6)


@given(coords)
def test_angles_in_range_and_aspect_at_least_one(P):
    _, _, ar = tet_quality(*P)
    if not np.isfinite(ar) or ar > 1e6:
        return
    ang = dihedral_angles(P)
    assert np.all((ang > 0) & (ang < 180))
    assert aspect_ratio(P) >= 1.0 - 1e-9
