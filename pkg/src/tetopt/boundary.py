"""Per-vertex boundary classification recovered from a raw tetrahedral mesh."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class BoundaryKind(IntEnum):
    FREE = 0
    FACET = 1
    SEGMENT = 2
    CORNER = 3
    CURVED = 4


# how constrained a vertex is; used to decide which endpoint survives a contraction
RANK = {
    BoundaryKind.FREE: 0,
    BoundaryKind.FACET: 1,
    BoundaryKind.CURVED: 1,
    BoundaryKind.SEGMENT: 2,
    BoundaryKind.CORNER: 3,
}

CLUSTER_ANGLE = 15.0


def triangle_normals(points, tris):
    """Unnormalized normals (length = twice the area)."""
    P = np.asarray(points)[np.asarray(tris, dtype=np.int64).reshape(-1, 3)]
    return np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])


def cluster_normals(normals, weights=None, angle=CLUSTER_ANGLE):
    """Greedy clustering of unit normals; returns representative unit normals."""
    cos_tol = math.cos(math.radians(angle))
    sums = []
    reps = []
    for k, n in enumerate(normals):
        w = 1.0 if weights is None else weights[k]
        for c, r in enumerate(reps):
            if float(np.dot(r, n)) > cos_tol:
                sums[c] = sums[c] + w * n
                reps[c] = sums[c] / np.linalg.norm(sums[c])
                break
        else:
            sums.append(w * np.asarray(n, dtype=float))
            reps.append(np.asarray(n, dtype=float))
    return reps


@dataclass
class GeometryModel:
    """Boundary constraints for every vertex of a mesh.

    ``anchor`` stores a point on the vertex's plane or line (its position at
    classification time), so positions can be snapped back after a move.
    """

    kind: np.ndarray
    normal: np.ndarray
    direction: np.ndarray
    anchor: np.ndarray
    surface: object = None

    @classmethod
    def all_free(cls, n_vertices, points=None):
        anchor = np.zeros((n_vertices, 3)) if points is None else np.array(points, dtype=float)
        return cls(
            kind=np.zeros(n_vertices, dtype=np.int8),
            normal=np.zeros((n_vertices, 3)),
            direction=np.zeros((n_vertices, 3)),
            anchor=anchor,
        )

    def __len__(self):
        return len(self.kind)

    def kind_of(self, v):
        return BoundaryKind(int(self.kind[v]))

    def add_vertex(self, kind, xyz, normal=None, direction=None):
        self.kind = np.append(self.kind, np.int8(kind))
        self.normal = np.vstack([self.normal, np.zeros(3) if normal is None else normal])
        self.direction = np.vstack([self.direction, np.zeros(3) if direction is None else direction])
        self.anchor = np.vstack([self.anchor, np.asarray(xyz, dtype=float)])
        return len(self.kind) - 1

    def sync(self, n_vertices):
        """Pad with free vertices up to ``n_vertices`` entries."""
        missing = n_vertices - len(self.kind)
        if missing > 0:
            self.kind = np.concatenate([self.kind, np.zeros(missing, dtype=np.int8)])
            self.normal = np.vstack([self.normal, np.zeros((missing, 3))])
            self.direction = np.vstack([self.direction, np.zeros((missing, 3))])
            self.anchor = np.vstack([self.anchor, np.zeros((missing, 3))])

    def remap(self, vmap):
        keep = np.asarray(vmap) >= 0
        order = np.argsort(np.asarray(vmap)[keep])
        idx = np.nonzero(keep)[0][order]
        self.kind = self.kind[idx]
        self.normal = self.normal[idx]
        self.direction = self.direction[idx]
        self.anchor = self.anchor[idx]

    def boundary_mask(self):
        return self.kind != BoundaryKind.FREE

    def snap(self, points, surface_project=None):
        """Return ``points`` with every constrained vertex put back on its geometry."""
        out = np.array(points, dtype=float, copy=True)
        k = self.kind[: len(out)]
        f = k == BoundaryKind.FACET
        if f.any():
            n = self.normal[: len(out)][f]
            off = np.einsum("ij,ij->i", out[f] - self.anchor[: len(out)][f], n)
            out[f] -= off[:, None] * n
        s = k == BoundaryKind.SEGMENT
        if s.any():
            d = self.direction[: len(out)][s]
            a = self.anchor[: len(out)][s]
            t = np.einsum("ij,ij->i", out[s] - a, d)
            out[s] = a + t[:, None] * d
        c = k == BoundaryKind.CORNER
        out[c] = self.anchor[: len(out)][c]
        return out

    def is_on_geometry(self, v, xyz, tol):
        """Whether ``xyz`` satisfies vertex ``v``'s constraint within ``tol``."""
        k = self.kind_of(v)
        x = np.asarray(xyz, dtype=float)
        if k == BoundaryKind.FREE or k == BoundaryKind.CURVED:
            return True
        if k == BoundaryKind.FACET:
            return abs(float(np.dot(x - self.anchor[v], self.normal[v]))) <= tol
        if k == BoundaryKind.SEGMENT:
            r = x - self.anchor[v]
            r = r - np.dot(r, self.direction[v]) * self.direction[v]
            return float(np.linalg.norm(r)) <= tol
        return float(np.linalg.norm(x - self.anchor[v])) <= tol


def classify_boundary(mesh, model="plc", angle=CLUSTER_ANGLE):
    """Classify every vertex as free, facet, segment, corner or curved.

    Parameters
    ----------
    mesh : TetMesh
    model : {"plc", "curved", "fixed"}
        ``"plc"`` clusters incident boundary-face normals: one cluster gives a
        facet vertex, two a segment vertex, three or more a corner.
        ``"curved"`` marks every boundary vertex as lying on a curved surface
        and ``"fixed"`` pins every boundary vertex.
    angle : float
        Clustering threshold in degrees.
    """
    nv = mesh.n_vertices
    geo = GeometryModel.all_free(nv, mesh.points)
    tris = mesh.boundary_triangles()
    if len(tris) == 0:
        return geo
    raw = triangle_normals(mesh.points, tris)
    areas = np.linalg.norm(raw, axis=1)
    unit = raw / areas[:, None]
    incident = {}
    for f, tri in enumerate(tris):
        for v in tri:
            incident.setdefault(int(v), []).append(f)
    for v, fs in incident.items():
        if model == "fixed":
            geo.kind[v] = BoundaryKind.CORNER
            continue
        if model == "curved":
            geo.kind[v] = BoundaryKind.CURVED
            n = (unit[fs] * areas[fs, None]).sum(axis=0)
            geo.normal[v] = n / np.linalg.norm(n)
            continue
        reps = cluster_normals(unit[fs], areas[fs], angle)
        if len(reps) == 1:
            geo.kind[v] = BoundaryKind.FACET
            geo.normal[v] = reps[0]
        elif len(reps) == 2:
            d = np.cross(reps[0], reps[1])
            ln = np.linalg.norm(d)
            if ln < math.sin(math.radians(angle)):
                geo.kind[v] = BoundaryKind.CORNER
            else:
                geo.kind[v] = BoundaryKind.SEGMENT
                geo.direction[v] = d / ln
        else:
            geo.kind[v] = BoundaryKind.CORNER
    return geo
