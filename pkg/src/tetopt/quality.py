"""Element quality measures and the discrete meshing energy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCell, EmptyMesh
from .mesh import reference_edge_matrix

OPTIMAL_DIHEDRAL = math.degrees(math.acos(1.0 / 3.0))

# outward faces (opposite vertex i) and the face pair meeting at each edge
_FACES = np.array([(1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)])
_EDGE_FACE_PAIRS = np.array([(2, 3), (1, 3), (1, 2), (0, 3), (0, 2), (0, 1)])

ANGLE_BIN_WIDTH = 5.0
DEFAULT_ANGLE_BINS = np.arange(0.0, 180.0 + ANGLE_BIN_WIDTH, ANGLE_BIN_WIDTH)
DEFAULT_AR_BINS = np.concatenate([np.arange(1.0, 5.0 + 1e-9, 0.2), [np.inf]])


@dataclass(frozen=True)
class EnergyParams:
    theta: float = 1.0 / 3.0
    p: float = 1.5
    d: int = 3

    def __post_init__(self):
        if not 0.0 < self.theta <= 0.5:
            raise ValueError(f"theta must lie in (0, 0.5], got {self.theta}")
        if not self.p > 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.d != 3:
            raise ValueError("only d = 3 is supported")


def _corners(points, tets):
    return np.asarray(points)[np.asarray(tets, dtype=np.int64).reshape(-1, 4)]


def _face_normals(P):
    a = P[:, _FACES[:, 0]]
    b = P[:, _FACES[:, 1]]
    c = P[:, _FACES[:, 2]]
    return np.cross(b - a, c - a)


def dihedral_angles_array(points, tets):
    """Interior dihedral angles in degrees, shape ``(n, 6)`` in EDGES order."""
    P = _corners(points, tets)
    n = _face_normals(P)
    norm = np.linalg.norm(n, axis=2)
    if np.any(norm <= 0.0):
        raise DegenerateCell("tetrahedron with a zero-area face")
    u = n / norm[..., None]
    dots = np.einsum("nkj,nkj->nk", u[:, _EDGE_FACE_PAIRS[:, 0]], u[:, _EDGE_FACE_PAIRS[:, 1]])
    return np.degrees(np.arccos(np.clip(-dots, -1.0, 1.0)))


def dihedral_angles(tet_points):
    """The six interior dihedral angles of one tetrahedron (degrees)."""
    return dihedral_angles_array(np.asarray(tet_points, dtype=float), [[0, 1, 2, 3]])[0]


def aspect_ratio_array(points, tets):
    P = _corners(points, tets)
    n = _face_normals(P)
    area_max = 0.5 * np.linalg.norm(n, axis=2).max(axis=1)
    e = P[:, 1:] - P[:, :1]
    vol = np.abs(np.einsum("ij,ij->i", e[:, 0], np.cross(e[:, 1], e[:, 2]))) / 6.0
    i, j = np.triu_indices(4, 1)
    longest = np.linalg.norm(P[:, i] - P[:, j], axis=2).max(axis=1)
    h = 3.0 * vol / area_max
    if np.any(h <= 1e-300):
        raise DegenerateCell("tetrahedron with vanishing altitude")
    return math.sqrt(2.0 / 3.0) * longest / h


def aspect_ratio(tet_points):
    """sqrt(2/3) * longest edge / shortest altitude; 1 for a regular tet."""
    return float(aspect_ratio_array(np.asarray(tet_points, dtype=float), [[0, 1, 2, 3]])[0])


def tet_quality(p0, p1, p2, p3):
    """(min dihedral, max dihedral, aspect ratio) of one cell, scalar code path.

    Used in the flip search where numpy call overhead dominates.
    """
    pts = (p0, p1, p2, p3)
    normals = []
    amax = 0.0
    for i, j, k in ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)):
        a, b, c = pts[i], pts[j], pts[k]
        ux, uy, uz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
        vx, vy, vz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
        nx, ny, nz = uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx
        ln = math.sqrt(nx * nx + ny * ny + nz * nz)
        if ln <= 0.0:
            return 0.0, 180.0, math.inf
        amax = max(amax, ln)
        normals.append((nx / ln, ny / ln, nz / ln))
    lo, hi = 180.0, 0.0
    for f, g in ((2, 3), (1, 3), (1, 2), (0, 3), (0, 2), (0, 1)):
        nf, ng = normals[f], normals[g]
        c = -(nf[0] * ng[0] + nf[1] * ng[1] + nf[2] * ng[2])
        ang = math.degrees(math.acos(min(1.0, max(-1.0, c))))
        lo = min(lo, ang)
        hi = max(hi, ang)
    ex = [(pts[j][0] - pts[i][0], pts[j][1] - pts[i][1], pts[j][2] - pts[i][2])
          for i, j in ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))]
    longest = math.sqrt(max(x * x + y * y + z * z for x, y, z in ex))
    a, b, c = ex[0], ex[1], ex[2]
    vol6 = abs(a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
               + a[2] * (b[0] * c[1] - b[1] * c[0]))
    if vol6 <= 0.0:
        return lo, hi, math.inf
    # shortest altitude = 3 V / A_max = vol6 / (2 A_max) = vol6 / amax
    return lo, hi, math.sqrt(2.0 / 3.0) * longest * amax / vol6


def _alive(mesh):
    arr, _ = mesh.tet_array()
    if len(arr) == 0:
        raise EmptyMesh("mesh has no tetrahedra")
    return arr


def mesh_min_angle(mesh):
    """Q(T_h): the smallest dihedral angle over all cells (degrees)."""
    return float(dihedral_angles_array(mesh.points, _alive(mesh)).min())


def tet_min_angles(mesh):
    arr, ids = mesh.tet_array()
    if len(arr) == 0:
        return np.zeros(0), ids
    return dihedral_angles_array(mesh.points, arr).min(axis=1), ids


# -- energy ----------------------------------------------------------------

def energy_density(J, detJ, params):
    """G(J, det J) evaluated for a stack of matrices."""
    d, p, th = params.d, params.p, params.theta
    tr = np.einsum("nij,nij->n", J, J)
    return th * tr ** (d * p / 2.0) + (1.0 - 2.0 * th) * d ** (d * p / 2.0) * detJ ** p


def element_terms(points, tets, n_tets=None):
    """Edge matrices, inverses, Jacobians ``J_K`` and volumes for many cells."""
    P = _corners(points, tets)
    E = np.transpose(P[:, 1:] - P[:, :1], (0, 2, 1))
    detE = np.linalg.det(E)
    if np.any(detE <= 0.0):
        bad = int(np.argmin(detE))
        raise DegenerateCell(f"cell {bad} has non-positive volume {detE[bad] / 6.0:.3e}")
    Einv = np.linalg.inv(E)
    Eh = reference_edge_matrix(n_tets or len(P))
    J = Eh @ Einv
    detJ = np.linalg.det(Eh) / detE
    return E, Einv, Eh, J, detJ, detE / 6.0


def energy_from(points, tets, params):
    _, _, _, J, detJ, vol = element_terms(points, tets)
    return float(np.sum(vol * energy_density(J, detJ, params)))


def energy(mesh, params=None):
    """Discrete energy ``I_h = sum_K |K| G(J_K, det J_K)``."""
    params = params or EnergyParams()
    return energy_from(mesh.points, _alive(mesh), params)


# -- statistics ------------------------------------------------------------

@dataclass
class QualityStats:
    theta_min: float
    theta_max: float
    mean: float
    stddev: float
    angle_bins: np.ndarray
    angle_counts: np.ndarray
    ar_bins: np.ndarray
    ar_counts: np.ndarray
    ar_max: float
    energy: float
    n_tets: int
    n_verts: int
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "theta_min": self.theta_min,
            "theta_max": self.theta_max,
            "mean": self.mean,
            "stddev": self.stddev,
            "angle_bins": [float(x) for x in self.angle_bins],
            "angle_counts": [int(x) for x in self.angle_counts],
            "ar_bins": [float(x) if np.isfinite(x) else "inf" for x in self.ar_bins],
            "ar_counts": [int(x) for x in self.ar_counts],
            "ar_max": self.ar_max,
            "energy": self.energy,
            "n_tets": self.n_tets,
            "n_verts": self.n_verts,
            **self.extra,
        }


def mesh_stats(mesh, params=None, angle_bins=None, ar_bins=None):
    params = params or EnergyParams()
    arr = _alive(mesh)
    angles = dihedral_angles_array(mesh.points, arr)
    ar = aspect_ratio_array(mesh.points, arr)
    abins = DEFAULT_ANGLE_BINS if angle_bins is None else np.asarray(angle_bins, dtype=float)
    rbins = DEFAULT_AR_BINS if ar_bins is None else np.asarray(ar_bins, dtype=float)
    acounts, _ = np.histogram(angles.ravel(), bins=abins)
    rcounts, _ = np.histogram(ar, bins=rbins)
    used = len(np.unique(arr))
    return QualityStats(
        theta_min=float(angles.min()),
        theta_max=float(angles.max()),
        mean=float(angles.mean()),
        stddev=float(angles.std()),
        angle_bins=abins,
        angle_counts=acounts,
        ar_bins=rbins,
        ar_counts=rcounts,
        ar_max=float(ar.max()),
        energy=energy_from(mesh.points, arr, params),
        n_tets=len(arr),
        n_verts=used,
    )
