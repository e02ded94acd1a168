"""Tetrahedral mesh representation and adjacency queries.

Tetrahedra are stored as positively oriented 4-tuples of vertex indices.
Deleted cells leave a ``None`` tombstone so cell ids stay stable while
flips and local operators rewrite the mesh; :meth:`TetMesh.compact`
renumbers everything once a phase is over.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCell, IndexOutOfRange, InvalidMesh, NotAnEdge

# local faces listed with outward orientation, face i is opposite vertex i
FACES = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))
EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

DEGENERACY_FACTOR = 1e-14


def orient3d(p, q, r, s):
    """Six times the signed volume of the tetrahedron ``(p, q, r, s)``."""
    ax, ay, az = q[0] - p[0], q[1] - p[1], q[2] - p[2]
    bx, by, bz = r[0] - p[0], r[1] - p[1], r[2] - p[2]
    cx, cy, cz = s[0] - p[0], s[1] - p[1], s[2] - p[2]
    return ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)


def signed_volumes(points, tets):
    """Signed volumes of many tetrahedra at once."""
    p = np.asarray(points)[np.asarray(tets)]
    e = p[:, 1:, :] - p[:, :1, :]
    return np.einsum("ij,ij->i", e[:, 0], np.cross(e[:, 1], e[:, 2])) / 6.0


def face_key(a, b, c):
    return tuple(sorted((a, b, c)))


def _odd_permutation(seq):
    inv = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inv += 1
    return inv % 2 == 1


class TetMesh:
    """Mutable tetrahedral mesh with face-keyed adjacency.

    Attributes
    ----------
    tets : list
        Per cell id, a positively oriented vertex 4-tuple or ``None`` if the
        cell was deleted.
    vertex_tets : list of set
        Incident cell ids per vertex.
    faces : dict
        Sorted vertex triple -> list of the (one or two) cells sharing it.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        self._pts = np.array(pts, copy=True)
        self._nv = len(pts)
        self.tets = []
        self.vertex_tets = [set() for _ in range(self._nv)]
        self.faces = {}
        self.n_alive = 0
        self._plist = None
        self._floor = None
        self.version = 0

    # -- vertices ---------------------------------------------------------

    @property
    def points(self):
        return self._pts[: self._nv]

    @property
    def n_vertices(self):
        return self._nv

    def set_points(self, pts):
        pts = np.asarray(pts, dtype=float)
        if pts.shape != (self._nv, 3):
            raise ValueError(f"expected shape {(self._nv, 3)}, got {pts.shape}")
        self._pts[: self._nv] = pts
        self._plist = None
        self.version += 1

    def set_point(self, i, xyz):
        self._pts[i] = xyz
        if self._plist is not None:
            self._plist[i] = tuple(float(c) for c in self._pts[i])
        self.version += 1

    def xyz(self, i):
        if self._plist is None:
            self._plist = [tuple(row) for row in self.points.tolist()]
        return self._plist[i]

    def coords(self):
        """Vertex coordinates as a list of tuples (fast scalar access)."""
        if self._plist is None:
            self._plist = [tuple(row) for row in self.points.tolist()]
        return self._plist

    def add_vertex(self, xyz):
        if self._nv == len(self._pts):
            grown = np.empty((max(8, 2 * len(self._pts)), 3))
            grown[: self._nv] = self._pts[: self._nv]
            self._pts = grown
        self._pts[self._nv] = xyz
        self.vertex_tets.append(set())
        if self._plist is not None:
            self._plist.append(tuple(float(c) for c in self._pts[self._nv]))
        self._nv += 1
        self.version += 1
        return self._nv - 1

    def bbox_diag(self):
        used = [v for v in range(self._nv) if self.vertex_tets[v]]
        pts = self.points[used] if used else self.points
        if len(pts) == 0:
            return 0.0
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))

    @property
    def volume_floor(self):
        """Absolute volume below which a cell counts as degenerate."""
        if self._floor is None:
            self._floor = DEGENERACY_FACTOR * self.bbox_diag() ** 3
        return self._floor

    # -- cells ------------------------------------------------------------

    def add_tet(self, verts):
        """Insert a cell, reorienting it to positive volume. Returns its id."""
        a, b, c, d = verts
        P = self.coords()
        if orient3d(P[a], P[b], P[c], P[d]) < 0.0:
            c, d = d, c
        t = len(self.tets)
        self.tets.append((a, b, c, d))
        for v in (a, b, c, d):
            self.vertex_tets[v].add(t)
        for f in ((b, c, d), (a, c, d), (a, b, d), (a, b, c)):
            k = face_key(*f)
            lst = self.faces.get(k)
            if lst is None:
                self.faces[k] = [t]
            else:
                lst.append(t)
        self.n_alive += 1
        return t

    def remove_tet(self, t):
        verts = self.tets[t]
        if verts is None:
            raise InvalidMesh(f"tet {t} already removed")
        a, b, c, d = verts
        for v in verts:
            self.vertex_tets[v].discard(t)
        for f in ((b, c, d), (a, c, d), (a, b, d), (a, b, c)):
            k = face_key(*f)
            lst = self.faces[k]
            lst.remove(t)
            if not lst:
                del self.faces[k]
        self.tets[t] = None
        self.n_alive -= 1
        return verts

    @property
    def n_tets(self):
        return self.n_alive

    def tet_ids(self):
        return [t for t, v in enumerate(self.tets) if v is not None]

    def tet_array(self):
        """Alive cells as an ``(n, 4)`` integer array plus their ids."""
        ids = self.tet_ids()
        if not ids:
            return np.zeros((0, 4), dtype=np.int64), np.zeros(0, dtype=np.int64)
        arr = np.array([self.tets[t] for t in ids], dtype=np.int64)
        return arr, np.array(ids, dtype=np.int64)

    def tet_volume(self, t):
        a, b, c, d = self.tets[t]
        P = self.coords()
        return orient3d(P[a], P[b], P[c], P[d]) / 6.0

    def find_tet(self, verts):
        a, b, c, d = verts
        common = self.vertex_tets[a] & self.vertex_tets[b] & self.vertex_tets[c] & self.vertex_tets[d]
        return next(iter(common)) if common else None

    def neighbors(self, t):
        """Neighbor ids across the four local faces, ``-1`` on the boundary."""
        verts = self.tets[t]
        out = []
        for f in FACES:
            lst = self.faces[face_key(*(verts[i] for i in f))]
            other = [u for u in lst if u != t]
            out.append(other[0] if other else -1)
        return out

    @property
    def tet_neighbors(self):
        return {t: self.neighbors(t) for t in self.tet_ids()}

    def has_edge(self, a, b):
        return bool(self.vertex_tets[a] & self.vertex_tets[b])

    def edge_tets(self, a, b):
        return self.vertex_tets[a] & self.vertex_tets[b]

    def edges(self):
        """Unique edges as an ``(m, 2)`` array with ``i < j`` per row."""
        arr, _ = self.tet_array()
        if len(arr) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        e = arr[:, np.array(EDGES)].reshape(-1, 2)
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def boundary_faces(self):
        """Boundary faces as ``(tet, local face)`` pairs."""
        owners = sorted({lst[0] for lst in self.faces.values() if len(lst) == 1})
        pairs = []
        for t in owners:
            verts = self.tets[t]
            for i, f in enumerate(FACES):
                if len(self.faces[face_key(*(verts[j] for j in f))]) == 1:
                    pairs.append((t, i))
        return pairs

    def boundary_triangles(self):
        """Outward oriented boundary triangles as an ``(m, 3)`` array."""
        tris = []
        for t, i in self.boundary_faces():
            verts = self.tets[t]
            tris.append(tuple(verts[j] for j in FACES[i]))
        return np.array(tris, dtype=np.int64).reshape(-1, 3)

    def is_boundary_face(self, a, b, c):
        lst = self.faces.get(face_key(a, b, c))
        return lst is not None and len(lst) == 1

    def boundary_vertices(self):
        tris = self.boundary_triangles()
        return np.unique(tris) if len(tris) else np.zeros(0, dtype=np.int64)

    def copy(self):
        m = TetMesh(self.points)
        m.tets = list(self.tets)
        m.vertex_tets = [set(s) for s in self.vertex_tets]
        m.faces = {k: list(v) for k, v in self.faces.items()}
        m.n_alive = self.n_alive
        return m

    def compact(self):
        """Drop tombstones and unused vertices.

        Returns the old-to-new vertex index map (``-1`` for dropped vertices).
        """
        used = np.array([bool(s) for s in self.vertex_tets], dtype=bool)
        vmap = np.full(self._nv, -1, dtype=np.int64)
        vmap[used] = np.arange(int(used.sum()))
        pts = self.points[used].copy()
        cells = [tuple(int(vmap[v]) for v in c) for c in self.tets if c is not None]
        self.__init__(pts)
        for c in cells:
            self._append_oriented(c)
        return vmap

    def _append_oriented(self, verts):
        # cells coming from a valid mesh are already positive
        t = len(self.tets)
        self.tets.append(tuple(verts))
        a, b, c, d = verts
        for v in verts:
            self.vertex_tets[v].add(t)
        for f in ((b, c, d), (a, c, d), (a, b, d), (a, b, c)):
            self.faces.setdefault(face_key(*f), []).append(t)
        self.n_alive += 1
        return t


def build_mesh(points, cells):
    """Build a :class:`TetMesh` with full adjacency.

    Negatively oriented cells are repaired by swapping two vertices. Cells
    whose volume is below ``1e-14 * bbox_diag**3`` raise
    :class:`DegenerateCell`.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 4)
    nv = len(pts)
    if len(cells) and (cells.min() < 0 or cells.max() >= nv):
        bad = int(np.argmax((cells < 0).any(axis=1) | (cells >= nv).any(axis=1)))
        raise IndexOutOfRange(f"cell {bad} references a vertex outside [0, {nv})")
    keys = set()
    for k, c in enumerate(cells):
        key = tuple(sorted(c.tolist()))
        if key in keys:
            raise InvalidMesh(f"duplicate cell {k}: {key}")
        keys.add(key)
    mesh = TetMesh(pts)
    if len(cells) == 0:
        return mesh
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    floor = DEGENERACY_FACTOR * diag ** 3
    vols = signed_volumes(pts, cells)
    for k, (c, vol) in enumerate(zip(cells.tolist(), vols)):
        if abs(vol) <= floor or len(set(c)) < 4:
            raise DegenerateCell(f"cell {k} {tuple(c)} has volume {vol:.3e}")
        if vol < 0:
            c[2], c[3] = c[3], c[2]
        mesh._append_oriented(c)
    for key, lst in mesh.faces.items():
        if len(lst) > 2:
            raise InvalidMesh(f"face {key} shared by {len(lst)} cells")
    return mesh


@dataclass
class EdgeStar:
    """Cells around an edge ``[a, b]`` in cyclic order.

    ``tets[i]`` is the cell ``(a, b, apexes[i], apexes[i + 1])`` (positively
    oriented in that vertex order). For an interior edge the ring is closed;
    for a boundary edge ``closed`` is False and the fan is open, so there is
    one more apex than cells.
    """

    a: int
    b: int
    tets: list
    apexes: list
    closed: bool

    @property
    def n(self):
        return len(self.tets)


def edge_star(mesh, a, b):
    ids = mesh.vertex_tets[a] & mesh.vertex_tets[b]
    if not ids:
        raise NotAnEdge(f"[{a}, {b}] is not an edge of the mesh")
    succ = {}
    pred = {}
    for t in ids:
        verts = mesh.tets[t]
        c, d = [v for v in verts if v != a and v != b]
        perm = [verts.index(a), verts.index(b), verts.index(c), verts.index(d)]
        if _odd_permutation(perm):
            c, d = d, c
        if c in succ or d in pred:
            raise InvalidMesh(f"edge [{a}, {b}] has a non-manifold star")
        succ[c] = (d, t)
        pred[d] = c
    starts = [c for c in succ if c not in pred]
    closed = not starts
    if closed:
        start = min(succ)
    elif len(starts) == 1:
        start = starts[0]
    else:
        raise InvalidMesh(f"edge [{a}, {b}] star is disconnected")
    apexes = [start]
    tets = []
    cur = start
    while cur in succ:
        nxt, t = succ[cur]
        tets.append(t)
        if closed and nxt == start:
            break
        apexes.append(nxt)
        cur = nxt
        if len(tets) > len(ids):
            raise InvalidMesh(f"edge [{a}, {b}] star walk did not terminate")
    if len(tets) != len(ids):
        raise InvalidMesh(f"edge [{a}, {b}] star is disconnected")
    return EdgeStar(a, b, tets, apexes, closed)


def is_interior_edge(mesh, a, b):
    """True if the star of ``[a, b]`` is a closed ring."""
    for t in mesh.vertex_tets[a] & mesh.vertex_tets[b]:
        verts = mesh.tets[t]
        c, d = [v for v in verts if v != a and v != b]
        if mesh.is_boundary_face(a, b, c) or mesh.is_boundary_face(a, b, d):
            return False
    return True


# -- element geometry ------------------------------------------------------

_REGULAR = np.array(
    [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.5, math.sqrt(3.0) / 2.0, 0.0],
        [0.5, math.sqrt(3.0) / 6.0, math.sqrt(2.0 / 3.0)],
    ]
)


def reference_edge_matrix(n_tets):
    """Edge matrix of the regular reference simplex with volume ``1 / n_tets``."""
    unit = (_REGULAR[1:] - _REGULAR[0]).T
    unit = unit / np.cbrt(np.linalg.det(unit) / 6.0)
    return unit * np.cbrt(1.0 / n_tets)


def edge_matrices(points, tets):
    """Edge matrices ``E_K`` (edge vectors as columns) for many cells."""
    p = np.asarray(points)[np.asarray(tets)]
    return np.transpose(p[:, 1:, :] - p[:, :1, :], (0, 2, 1))


@dataclass
class ElementFrame:
    edge_matrix: np.ndarray
    ref_edge_matrix: np.ndarray
    jacobian_inv: np.ndarray
    det_j: float
    volume: float


def element_frame(mesh, k, n_tets=None):
    verts = mesh.tets[k]
    if verts is None:
        raise InvalidMesh(f"tet {k} does not exist")
    E = edge_matrices(mesh.points, [verts])[0]
    vol = np.linalg.det(E) / 6.0
    if vol <= mesh.volume_floor:
        raise DegenerateCell(f"tet {k} has volume {vol:.3e}")
    Eh = reference_edge_matrix(n_tets or mesh.n_tets)
    J = Eh @ np.linalg.inv(E)
    return ElementFrame(E, Eh, J, float(np.linalg.det(J)), float(vol))


# -- checks ----------------------------------------------------------------

def validate(mesh):
    """Check positive volumes, face sharing, adjacency symmetry and incidence.

    Raises :class:`InvalidMesh` describing the first violation found.
    """
    P = mesh.coords()
    floor = mesh.volume_floor
    seen = set()
    for t, verts in enumerate(mesh.tets):
        if verts is None:
            continue
        if len(set(verts)) != 4:
            raise InvalidMesh(f"tet {t} repeats a vertex: {verts}")
        key = tuple(sorted(verts))
        if key in seen:
            raise InvalidMesh(f"duplicate tet {key}")
        seen.add(key)
        vol = orient3d(*(P[v] for v in verts)) / 6.0
        if vol <= floor:
            raise InvalidMesh(f"tet {t} {verts} has non-positive volume {vol:.3e}")
        for v in verts:
            if t not in mesh.vertex_tets[v]:
                raise InvalidMesh(f"vertex {v} does not list tet {t}")
        for f in FACES:
            lst = mesh.faces.get(face_key(*(verts[j] for j in f)))
            if lst is None or t not in lst:
                raise InvalidMesh(f"face table misses tet {t}")
    for v, ts in enumerate(mesh.vertex_tets):
        for t in ts:
            if mesh.tets[t] is None or v not in mesh.tets[t]:
                raise InvalidMesh(f"vertex {v} lists stale tet {t}")
    for key, lst in mesh.faces.items():
        if not 1 <= len(lst) <= 2:
            raise InvalidMesh(f"face {key} shared by {len(lst)} tets")
        for t in lst:
            if mesh.tets[t] is None or not set(key) <= set(mesh.tets[t]):
                raise InvalidMesh(f"face table entry {key} -> {t} is stale")
        if len(lst) == 2:
            # the two cells must lie on opposite sides of the shared face
            t0, t1 = lst
            x0 = [v for v in mesh.tets[t0] if v not in key][0]
            x1 = [v for v in mesh.tets[t1] if v not in key][0]
            s0 = orient3d(P[key[0]], P[key[1]], P[key[2]], P[x0])
            s1 = orient3d(P[key[0]], P[key[1]], P[key[2]], P[x1])
            if s0 * s1 >= 0:
                raise InvalidMesh(f"tets {t0} and {t1} overlap across face {key}")
    nb = mesh.tet_neighbors
    for t, row in nb.items():
        for u in row:
            if u >= 0 and t not in nb[u]:
                raise InvalidMesh(f"adjacency of {t} and {u} is not symmetric")
    return True


def canonical_form(mesh):
    """Sorted list of sorted vertex tuples; independent of cell ids."""
    return sorted(tuple(sorted(int(x) for x in c)) for c in mesh.tets if c is not None)


def mesh_hash(mesh):
    h = hashlib.sha256(repr(canonical_form(mesh)).encode())
    return h.hexdigest()


def total_volume(mesh):
    arr, _ = mesh.tet_array()
    return float(signed_volumes(mesh.points, arr).sum()) if len(arr) else 0.0
