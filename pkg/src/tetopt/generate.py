"""Synthetic test meshes: random and structured cubes, an L-shape, an ellipsoid."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial import Delaunay

from .errors import InvalidMesh
from .mesh import build_mesh, signed_volumes

# Kuhn subdivision of the unit cube: one tet per path 000 -> 111
_KUHN = []
for perm in itertools.permutations(range(3)):
    c = [0, 0, 0]
    path = [tuple(c)]
    for axis in perm:
        c[axis] = 1
        path.append(tuple(c))
    _KUHN.append(path)


def _from_delaunay(points, floor_rel=1e-12):
    """Delaunay tetrahedralization with flat hull slivers peeled off.

    Coplanar boundary points make Qhull emit zero-volume cells on the hull.
    They are removed layer by layer from the outside, so the remaining
    cells still fill the domain without cracks.
    """
    points = np.asarray(points, dtype=float)
    tri = Delaunay(points)
    cells = tri.simplices.astype(np.int64)
    nbr = tri.neighbors
    diag = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))
    flat = np.abs(signed_volumes(points, cells)) <= floor_rel * diag ** 3
    alive = np.ones(len(cells), dtype=bool)
    changed = True
    while changed:
        changed = False
        for k in np.nonzero(flat & alive)[0]:
            if np.any((nbr[k] < 0) | ~alive[np.maximum(nbr[k], 0)]):
                alive[k] = False
                changed = True
    if np.any(flat & alive):
        raise InvalidMesh("Delaunay mesh has interior flat cells; jitter the points")
    cells = cells[alive]
    used = np.unique(cells)
    remap = -np.ones(len(points), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return build_mesh(points[used], remap[cells])


def rand_cube(n_interior=240, n_face=16, n_edge=3, seed=0):
    """Random Delaunay mesh of the unit cube.

    Vertices are the 8 corners plus uniformly random points on each edge
    (``n_edge`` per edge), on each face (``n_face`` per face) and inside
    (``n_interior``). The defaults give roughly 2000 tetrahedra.
    """
    rng = np.random.default_rng(seed)
    pts = [np.array(list(itertools.product((0.0, 1.0), repeat=3)))]
    for axis in range(3):
        others = [i for i in range(3) if i != axis]
        for u, v in itertools.product((0.0, 1.0), repeat=2):
            p = np.zeros((n_edge, 3))
            p[:, axis] = rng.uniform(0.05, 0.95, n_edge)
            p[:, others[0]], p[:, others[1]] = u, v
            pts.append(p)
        for side in (0.0, 1.0):
            p = rng.uniform(0.05, 0.95, (n_face, 3))
            p[:, axis] = side
            pts.append(p)
    pts.append(rng.uniform(0.05, 0.95, (n_interior, 3)))
    return _from_delaunay(np.vstack(pts))


def _grid_points(k):
    g = np.linspace(0.0, 1.0, k + 1)
    return np.array(list(itertools.product(g, g, g)))


def structured_cube(k=5, perturb=0.0, seed=0, keep=None):
    """``k x k x k`` cube grid, six tetrahedra per cube.

    Interior vertices are moved by up to ``perturb`` times the grid spacing
    in each coordinate. ``keep(i, j, l)`` may exclude grid cubes.
    """
    pts = _grid_points(k)

    def vid(i, j, l):
        return (i * (k + 1) + j) * (k + 1) + l

    cells = []
    for i, j, l in itertools.product(range(k), repeat=3):
        if keep is not None and not keep(i, j, l):
            continue
        for path in _KUHN:
            cells.append([vid(i + a, j + b, l + c) for a, b, c in path])
    cells = np.array(cells, dtype=np.int64)
    used = np.unique(cells)
    if perturb > 0.0:
        rng = np.random.default_rng(seed)
        h = 1.0 / k
        interior = np.all((pts > 1e-12) & (pts < 1 - 1e-12), axis=1)
        if keep is not None:
            # vertices touching an excluded cube lie on the boundary
            mesh = build_mesh(pts, cells)
            bnd = set(mesh.boundary_vertices())
            interior &= np.array([v not in bnd for v in range(len(pts))])
        shift = rng.uniform(-perturb * h, perturb * h, pts.shape)
        pts = pts + shift * interior[:, None]
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return build_mesh(pts[used], remap[cells])


def l_shape(k=4, perturb=0.0, seed=0):
    """Unit cube with the ``x > 1/2, y > 1/2`` quarter removed."""
    half = k // 2
    return structured_cube(k, perturb, seed, keep=lambda i, j, l: not (i >= half and j >= half))


def _icosphere(level):
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(x, dtype=float) / np.linalg.norm(x) for x in v]
    for _ in range(level):
        mid = {}
        nf = []
        for a, b, c in f:
            m = []
            for u, w in ((a, b), (b, c), (c, a)):
                key = (min(u, w), max(u, w))
                if key not in mid:
                    p = verts[u] + verts[w]
                    verts.append(p / np.linalg.norm(p))
                    mid[key] = len(verts) - 1
                m.append(mid[key])
            nf += [(a, m[0], m[2]), (b, m[1], m[0]), (c, m[2], m[1]), (m[0], m[1], m[2])]
        f = nf
    return np.array(verts)


def ellipsoid(axes=(1.0, 0.8, 0.6), level=2, n_interior=150, seed=0):
    """Delaunay mesh of an ellipsoid from an icosphere surface plus random interior points."""
    rng = np.random.default_rng(seed)
    axes = np.asarray(axes, dtype=float)
    surf = _icosphere(level) * axes
    inner = []
    while len(inner) < n_interior:
        p = rng.uniform(-1.0, 1.0, 3)
        if np.sum(p * p) < 0.8 ** 2:
            inner.append(p * axes)
    return _from_delaunay(np.vstack([surf, np.array(inner)]))


def random_ring(n, rng, height=1.0, jitter=0.3):
    """An isolated ring of ``n`` cells around the interior edge ``[0, 1]``."""
    ang = np.linspace(0.0, 2 * np.pi, n, endpoint=False) + rng.uniform(-jitter, jitter, n) * (np.pi / n)
    r = rng.uniform(0.6, 1.4, n)
    ring = np.column_stack([r * np.cos(ang), r * np.sin(ang), rng.uniform(-jitter, jitter, n)])
    ends = np.array([[rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), height + rng.uniform(-0.4, 0.4)],
                     [rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), -height + rng.uniform(-0.4, 0.4)]])
    cells = [[0, 1, 2 + i, 2 + (i + 1) % n] for i in range(n)]
    return build_mesh(np.vstack([ends, ring]), cells)
