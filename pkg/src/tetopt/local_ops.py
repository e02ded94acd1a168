"""Topological repair operators: edge contraction, edge splitting, 1-to-4 splits."""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .boundary import CLUSTER_ANGLE, RANK, BoundaryKind
from .errors import NoConvergence, VanishingGradient
from .mesh import FACES, face_key, orient3d
from .quality import dihedral_angles_array, tet_quality

log = logging.getLogger(__name__)

OMEGA = -1  # virtual vertex joined to every boundary face


@dataclass
class LengthPolicy:
    l_ave: float
    contract_factor: float = 0.5
    split_factor: float = 1.5

    def __post_init__(self):
        if not 0.0 < self.contract_factor < 1.0 < self.split_factor:
            raise ValueError("need 0 < contract_factor < 1 < split_factor")
        if not self.l_ave > 0.0:
            raise ValueError("l_ave must be positive")

    @classmethod
    def from_mesh(cls, mesh, contract_factor=0.5, split_factor=1.5):
        return cls(mean_edge_length(mesh), contract_factor, split_factor)

    @property
    def short(self):
        return self.contract_factor * self.l_ave

    @property
    def long(self):
        return self.split_factor * self.l_ave


def edge_lengths(mesh):
    e = mesh.edges()
    P = mesh.points
    return e, np.linalg.norm(P[e[:, 0]] - P[e[:, 1]], axis=1)


def mean_edge_length(mesh):
    _, ln = edge_lengths(mesh)
    return float(ln.mean()) if len(ln) else 0.0


def _boundary_tris_at(mesh, v):
    """Outward boundary triangles incident to ``v``."""
    out = []
    for t in mesh.vertex_tets[v]:
        verts = mesh.tets[t]
        for f in FACES:
            tri = (verts[f[0]], verts[f[1]], verts[f[2]])
            if v in tri and len(mesh.faces[face_key(*tri)]) == 1:
                out.append(tri)
    return out


def _link(cells, v):
    out = set()
    for c in cells:
        rest = [x for x in c if x != v]
        for k in range(1, len(rest) + 1):
            for sub in itertools.combinations(rest, k):
                out.add(frozenset(sub))
    return out


def link_condition(mesh, u, v):
    """Whether contracting ``[u, v]`` preserves the mesh topology.

    Checks ``Lk(u) & Lk(v) == Lk(uv)`` on the mesh closed off by a virtual
    vertex coned over the boundary.
    """
    cu = [mesh.tets[t] for t in mesh.vertex_tets[u]] + [(OMEGA,) + t for t in _boundary_tris_at(mesh, u)]
    cv = [mesh.tets[t] for t in mesh.vertex_tets[v]] + [(OMEGA,) + t for t in _boundary_tris_at(mesh, v)]
    both = [c for c in cu if v in c]
    luv = set()
    for c in both:
        rest = [x for x in c if x != u and x != v]
        luv.add(frozenset(rest))
        for x in rest:
            luv.add(frozenset([x]))
    return (_link(cu, u) & _link(cv, v)) == luv


def _compatible(geo, keep, remove, P, tol):
    """Whether ``remove`` may be merged into ``keep`` without leaving its geometry."""
    if geo is None:
        return True
    kr = geo.kind_of(remove)
    kk = geo.kind_of(keep)
    if kr == BoundaryKind.FREE:
        return True
    if kr == BoundaryKind.CORNER or kk == BoundaryKind.FREE:
        return False
    if kr == BoundaryKind.CURVED:
        return True
    return geo.is_on_geometry(remove, P[keep], tol)


def _contraction_cells(mesh, keep, remove):
    """Cells around ``remove`` rewritten with ``keep`` (those not containing both)."""
    out = []
    for t in mesh.vertex_tets[remove]:
        verts = mesh.tets[t]
        if keep in verts:
            continue
        out.append((t, tuple(keep if x == remove else x for x in verts)))
    return out


def _contraction_ok(mesh, keep, remove, floor):
    P = mesh.coords()
    new = _contraction_cells(mesh, keep, remove)
    f6 = 6.0 * floor
    for _, (a, b, c, d) in new:
        if orient3d(P[a], P[b], P[c], P[d]) <= f6:
            return None
    area_floor = 1e-12 * mesh.bbox_diag() ** 2
    for tri in _boundary_tris_at(mesh, remove):
        if keep in tri:
            continue
        a, b, c = (P[x] for x in tri)
        a2, b2, c2 = (P[keep] if x == remove else P[x] for x in tri)
        n0 = np.cross(np.subtract(b, a), np.subtract(c, a))
        n1 = np.cross(np.subtract(b2, a2), np.subtract(c2, a2))
        if np.linalg.norm(n1) <= area_floor or np.dot(n0, n1) <= 0.0:
            return None
    if not new:
        return 180.0
    return min(tet_quality(*(P[x] for x in cell))[0] for _, cell in new)


def contract_edge(mesh, keep, remove, geo=None):
    """Merge vertex ``remove`` into ``keep``; returns the ids of rewritten cells."""
    shared = list(mesh.vertex_tets[keep] & mesh.vertex_tets[remove])
    moved = _contraction_cells(mesh, keep, remove)
    for t in shared:
        mesh.remove_tet(t)
    new = []
    for t, cell in moved:
        mesh.remove_tet(t)
        new.append(mesh.add_tet(cell))
    return new


def contract_short_edges(mesh, geo=None, policy=None, fix_boundary=False):
    """Contract every edge shorter than ``policy.short`` that can be contracted.

    Candidates come from a snapshot taken on entry, shortest first. The
    surviving endpoint is the more constrained one; between equals, the one
    giving the larger minimum dihedral angle among the rewritten cells.
    Returns the number of contractions.
    """
    policy = policy or LengthPolicy.from_mesh(mesh)
    e, ln = edge_lengths(mesh)
    cand = np.nonzero(ln < policy.short)[0]
    cand = cand[np.argsort(ln[cand], kind="stable")]
    floor = mesh.volume_floor
    tol = 1e-9 * mesh.bbox_diag()
    count = 0
    for k in cand:
        u, v = int(e[k, 0]), int(e[k, 1])
        if not mesh.has_edge(u, v):
            continue
        P = mesh.coords()
        if math.dist(P[u], P[v]) >= policy.short:
            continue
        options = []
        for keep, rem in ((u, v), (v, u)):
            if fix_boundary and geo is not None and geo.kind_of(rem) != BoundaryKind.FREE:
                continue
            if not _compatible(geo, keep, rem, P, tol):
                continue
            rank = RANK[geo.kind_of(keep)] if geo is not None else 0
            options.append((rank, keep, rem))
        if not options:
            continue
        best = max(o[0] for o in options)
        scored = []
        for rank, keep, rem in options:
            if rank != best:
                continue
            q = _contraction_ok(mesh, keep, rem, floor)
            if q is not None:
                scored.append((q, keep, rem))
        if not scored or not link_condition(mesh, u, v):
            continue
        scored.sort(key=lambda s: (-s[0], s[1]))
        _, keep, rem = scored[0]
        contract_edge(mesh, keep, rem, geo)
        count += 1
    log.debug("contracted %d of %d short edges", count, len(cand))
    return count


def _boundary_edge_tris(mesh, u, v):
    return [t for t in _boundary_tris_at(mesh, u) if v in t]


def _midpoint_class(mesh, geo, u, v, tris):
    """Boundary kind, normal and direction for the midpoint of a boundary edge."""
    P = mesh.points
    ku, kv = geo.kind_of(u), geo.kind_of(v)
    if ku == BoundaryKind.CURVED or kv == BoundaryKind.CURVED:
        return BoundaryKind.CURVED, None, None
    ns = []
    for a, b, c in tris:
        n = np.cross(P[b] - P[a], P[c] - P[a])
        ns.append(n / np.linalg.norm(n))
    cos_tol = math.cos(math.radians(CLUSTER_ANGLE))
    if all(float(np.dot(ns[0], n)) > cos_tol for n in ns[1:]):
        n = ns[0]
        for w in (u, v):
            if geo.kind_of(w) == BoundaryKind.FACET:
                n = geo.normal[w]
                break
        return BoundaryKind.FACET, n, None
    d = P[v] - P[u]
    return BoundaryKind.SEGMENT, None, d / np.linalg.norm(d)


def split_edge(mesh, u, v, xyz):
    """Insert a vertex at ``xyz`` on edge ``[u, v]``; every ring cell is split in two."""
    ring = list(mesh.vertex_tets[u] & mesh.vertex_tets[v])
    m = mesh.add_vertex(xyz)
    for t in ring:
        verts = mesh.remove_tet(t)
        mesh.add_tet(tuple(m if x == u else x for x in verts))
        mesh.add_tet(tuple(m if x == v else x for x in verts))
    return m


def _ring_positive(mesh, m, floor):
    P = mesh.coords()
    f6 = 6.0 * floor
    for t in mesh.vertex_tets[m]:
        a, b, c, d = mesh.tets[t]
        if orient3d(P[a], P[b], P[c], P[d]) <= f6:
            return False
    return True


def _boundary_ok(mesh, m, ref):
    P = mesh.points
    for tri in _boundary_tris_at(mesh, m):
        a, b, c = (P[x] for x in tri)
        n = np.cross(b - a, c - a)
        if np.dot(n, ref) <= 0.0:
            return False
    return True


def split_long_edges(mesh, geo=None, surface=None, policy=None, fix_boundary=False):
    """Halve every edge longer than ``policy.long``, longest first.

    Midpoints of curved boundary edges are projected onto ``surface``; if
    the projection fails or would invert a cell, the midpoint is kept.
    Returns the number of splits.
    """
    policy = policy or LengthPolicy.from_mesh(mesh)
    e, ln = edge_lengths(mesh)
    cand = np.nonzero(ln > policy.long)[0]
    cand = cand[np.argsort(-ln[cand], kind="stable")]
    floor = mesh.volume_floor
    count = 0
    for k in cand:
        u, v = int(e[k, 0]), int(e[k, 1])
        if not mesh.has_edge(u, v):
            continue
        tris = _boundary_edge_tris(mesh, u, v)
        if tris and fix_boundary:
            continue
        P = mesh.points
        mid = 0.5 * (P[u] + P[v])
        if not tris:
            kind, n, d = BoundaryKind.FREE, None, None
        elif geo is None:
            kind, n, d = BoundaryKind.FREE, None, None
        else:
            kind, n, d = _midpoint_class(mesh, geo, u, v, tris)
        ref = None
        if tris:
            a, b, c = (P[x] for x in tris[0])
            ref = np.cross(b - a, c - a)
        m = split_edge(mesh, u, v, mid)
        if kind == BoundaryKind.CURVED and surface is not None:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", NoConvergence)
                    x = surface.project(mid)
                mesh.set_point(m, x)
                if not (_ring_positive(mesh, m, floor) and _boundary_ok(mesh, m, ref)):
                    mesh.set_point(m, mid)
            except VanishingGradient:
                warnings.warn("midpoint kept unprojected: vanishing surface gradient", NoConvergence)
        if geo is not None:
            geo.sync(m)
            geo.add_vertex(kind, mesh.points[m], n, d)
        count += 1
    log.debug("split %d long edges", count)
    return count


def split_tet(mesh, t):
    """1-to-4 split of cell ``t`` at its barycenter; returns the new vertex."""
    verts = mesh.tets[t]
    b = mesh.points[list(verts)].mean(axis=0)
    m = mesh.add_vertex(b)
    mesh.remove_tet(t)
    for i in range(4):
        mesh.add_tet(tuple(m if j == i else x for j, x in enumerate(verts)))
    return m


def split_bad_tets(mesh, theta_lim, geo=None):
    """Split every cell whose minimum dihedral angle is below ``theta_lim``.

    The bad cells are determined once on entry. Returns the number split.
    """
    arr, ids = mesh.tet_array()
    if len(arr) == 0:
        return 0
    mins = dihedral_angles_array(mesh.points, arr).min(axis=1)
    floor = mesh.volume_floor
    count = 0
    for t in ids[mins < theta_lim]:
        t = int(t)
        if mesh.tets[t] is None or mesh.tet_volume(t) / 4.0 <= floor:
            continue
        m = split_tet(mesh, t)
        if geo is not None:
            geo.sync(m)
            geo.add_vertex(BoundaryKind.FREE, mesh.points[m])
        count += 1
    log.debug("split %d bad cells", count)
    return count
