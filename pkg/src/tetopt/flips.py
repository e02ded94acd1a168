"""Elementary flips, reversible edge removal and the lazy searching pass.

An edge ``[a, b]`` shared by ``n`` cells is removed by a sequence of
2-to-3 flips on faces ``[a, b, p_i]`` that shrinks its ring one apex at a
time, finished by a 3-to-2 flip once three cells remain. At positive search
levels an adjacent edge ``[a, p_i]`` or ``[b, p_i]`` may be removed first by
a nested search, which also takes ``p_i`` out of the ring. Every forward
flip is recorded so that :func:`flipnm_post` can walk the records backwards
and restore the mesh exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import CorruptRecord, NotFlippable
from .mesh import edge_star, face_key, is_interior_edge, orient3d
from .quality import dihedral_angles_array, tet_quality

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 400


class FlipCriterion(Enum):
    MIN_MAX_DIHEDRAL = "minmax"
    ASPECT_RATIO = "aspect"

    def other(self):
        if self is FlipCriterion.MIN_MAX_DIHEDRAL:
            return FlipCriterion.ASPECT_RATIO
        return FlipCriterion.MIN_MAX_DIHEDRAL


# -- elementary flips -------------------------------------------------------

def _orient(mesh, a, b, c, d):
    P = mesh.coords()
    return orient3d(P[a], P[b], P[c], P[d])


def _apply(mesh, remove, add, journal):
    for t in remove:
        verts = mesh.remove_tet(t)
        if journal is not None:
            journal.removed(verts)
    new = []
    for verts in add:
        t = mesh.add_tet(verts)
        new.append(t)
        if journal is not None:
            journal.added(mesh.tets[t])
    return new


def flip23_check(mesh, face):
    """Return ``(t0, t1, d, e)`` if the interior face can be 2-3 flipped, else None."""
    u, v, w = face
    lst = mesh.faces.get(face_key(u, v, w))
    if lst is None or len(lst) != 2:
        return None
    t0, t1 = lst
    d = next(x for x in mesh.tets[t0] if x not in (u, v, w))
    e = next(x for x in mesh.tets[t1] if x not in (u, v, w))
    if mesh.has_edge(d, e):
        return None
    f6 = 6.0 * mesh.volume_floor
    o = (_orient(mesh, d, e, u, v), _orient(mesh, d, e, v, w), _orient(mesh, d, e, w, u))
    if not (all(x > f6 for x in o) or all(x < -f6 for x in o)):
        return None
    return t0, t1, d, e


def flip23(mesh, face, journal=None, check=True):
    """Replace the two cells sharing ``face`` by three cells around their apex edge.

    Raises :class:`NotFlippable` if the face is on the boundary or the two
    cells do not form a convex bipyramid.
    """
    u, v, w = face
    if check:
        found = flip23_check(mesh, face)
        if found is None:
            raise NotFlippable(f"face {tuple(face)} cannot be 2-3 flipped")
        t0, t1, d, e = found
    else:
        lst = mesh.faces.get(face_key(u, v, w))
        if lst is None or len(lst) != 2:
            raise CorruptRecord(f"face {tuple(face)} is not shared by two cells")
        t0, t1 = lst
        d = next(x for x in mesh.tets[t0] if x not in (u, v, w))
        e = next(x for x in mesh.tets[t1] if x not in (u, v, w))
    return _apply(mesh, (t0, t1), ((d, e, u, v), (d, e, v, w), (d, e, w, u)), journal)


def flip32_check(mesh, a, b):
    """Return ``(tets, apexes)`` if the edge can be 3-2 flipped, else None."""
    ids = mesh.vertex_tets[a] & mesh.vertex_tets[b]
    if len(ids) != 3:
        return None
    star = edge_star(mesh, a, b)
    if not star.closed:
        return None
    p0, p1, p2 = star.apexes
    if face_key(p0, p1, p2) in mesh.faces:
        return None
    f6 = 6.0 * mesh.volume_floor
    oa = _orient(mesh, p0, p1, p2, a)
    ob = _orient(mesh, p0, p1, p2, b)
    if abs(oa) <= f6 or abs(ob) <= f6 or (oa > 0) == (ob > 0):
        return None
    return star.tets, star.apexes


def flip32(mesh, a, b, journal=None, check=True):
    """Replace the three cells around edge ``[a, b]`` by two cells."""
    if check:
        if len(mesh.vertex_tets[a] & mesh.vertex_tets[b]) != 3:
            raise NotFlippable(f"edge [{a}, {b}] is not shared by exactly three cells")
        found = flip32_check(mesh, a, b)
        if found is None:
            raise NotFlippable(f"edge [{a}, {b}] cannot be 3-2 flipped")
        tets, (p0, p1, p2) = found
    else:
        star = edge_star(mesh, a, b)
        if star.n != 3 or not star.closed:
            raise CorruptRecord(f"edge [{a}, {b}] does not have a ring of three cells")
        tets, (p0, p1, p2) = star.tets, star.apexes
    return _apply(mesh, tets, ((p0, p1, p2, a), (p0, p1, p2, b)), journal)


# -- search state ------------------------------------------------------------

@dataclass
class FlipRecord:
    """One forward step of a search.

    ``kind`` is ``"flip23"`` (face ``[a, b, apex]`` flipped), ``"flipnm"``
    (edge ``[x, apex]`` removed by the nested search ``child``) or
    ``"flip32"`` (the final flip removing the edge itself).
    """

    kind: str
    position: int = -1
    apex: int = -1
    child: "FlipSearch | None" = None


class _Region:
    """Cells destroyed and created by a search, keyed by sorted vertex tuples."""

    def __init__(self):
        self.created = set()
        self.destroyed = set()

    def removed(self, verts):
        k = tuple(sorted(verts))
        if k in self.created:
            self.created.remove(k)
        else:
            self.destroyed.add(k)

    def added(self, verts):
        k = tuple(sorted(verts))
        if k in self.destroyed:
            self.destroyed.remove(k)
        else:
            self.created.add(k)


class QualityCache:
    """Per-cell (min dihedral, max dihedral, aspect ratio) keyed by vertex set.

    Valid as long as vertex positions do not change.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        self.version = mesh.version
        self._q = {}

    def get(self, verts):
        if self.mesh.version != self.version:
            self._q.clear()
            self.version = self.mesh.version
        k = tuple(sorted(verts))
        q = self._q.get(k)
        if q is None:
            P = self.mesh.coords()
            q = tet_quality(P[k[0]], P[k[1]], P[k[2]], P[k[3]])
            self._q[k] = q
        return q


def objective(qualities, criterion):
    """Comparable score of a set of cells; larger is better."""
    if criterion is FlipCriterion.ASPECT_RATIO:
        return (-max(q[2] for q in qualities),)
    return (min(q[0] for q in qualities), -max(q[1] for q in qualities))


def _passes(q, base, criterion):
    # necessary condition for a cell to belong to an improving configuration
    if criterion is FlipCriterion.ASPECT_RATIO:
        return q[2] < -base[0]
    lo, hi = base[0], -base[1]
    return q[0] >= lo and (q[0] > lo or q[1] < hi)


class _Context:
    def __init__(self, mesh, criterion, backtrack, accept, budget, cache):
        self.mesh = mesh
        self.criterion = criterion
        self.backtrack = backtrack
        self.accept = accept
        self.budget = budget
        self.cache = cache if cache is not None else (QualityCache(mesh) if criterion else None)
        self.region = _Region()
        self.flips = 0
        self.failed = set()
        self.baseline = None

    @property
    def exhausted(self):
        return self.budget is not None and self.flips >= self.budget


class FlipSearch:
    """Working ring of the cells around edge ``[a, b]`` plus its flip records.

    Create one for the root edge and pass it to :func:`flipnm`. ``apexes``
    holds the current ring so that ``tets[i]`` is the cell
    ``[a, b, apexes[i], apexes[i + 1]]``; ``records`` is the stack of forward
    steps taken so far.

    Parameters
    ----------
    criterion : FlipCriterion, optional
        If given, every committed cell must be a candidate improvement and
        the finished removal must improve the criterion over the original
        ring; otherwise flips are only checked for validity.
    backtrack : bool
        If True, failing branches are reversed immediately and alternatives
        explored (lazy search). If False a failing search stops at the first
        dead end and leaves its flips in place for :func:`flipnm_post`.
    accept : callable, optional
        ``accept(search) -> bool`` consulted before committing the final
        3-2 flip of the root edge; overrides the criterion check.
    budget : int, optional
        Maximum number of forward flips for the whole search tree.
    """

    def __init__(self, mesh, a, b, criterion=None, backtrack=False, accept=None,
                 budget=DEFAULT_BUDGET, cache=None, _parent=None, _protected=frozenset()):
        self.mesh = mesh
        self.a, self.b = a, b
        if not is_interior_edge(mesh, a, b):
            raise NotFlippable(f"edge [{a}, {b}] is a boundary edge")
        star = edge_star(mesh, a, b)
        if not star.closed:
            raise NotFlippable(f"edge [{a}, {b}] is a boundary edge")
        self.apexes = list(star.apexes)
        self.n0 = len(self.apexes)
        self.records = []
        self.done = False
        self.parent = _parent
        self.protected = _protected
        if _parent is None:
            self.ctx = _Context(mesh, criterion, backtrack, accept, budget, cache)
            if self.ctx.criterion is not None:
                self.ctx.baseline = objective(
                    [self.ctx.cache.get(mesh.tets[t]) for t in star.tets], self.ctx.criterion)
        else:
            self.ctx = _parent.ctx

    @property
    def n(self):
        return len(self.apexes)

    @property
    def tets(self):
        a, b, ap, m = self.a, self.b, self.apexes, self.mesh
        return [m.find_tet((a, b, ap[i], ap[(i + 1) % len(ap)])) for i in range(len(ap))]

    def chain_edges(self):
        s, out = self, []
        while s is not None:
            out.append((s.a, s.b))
            s = s.parent
        return out

    @property
    def created(self):
        return set(self.ctx.region.created)

    @property
    def destroyed(self):
        return set(self.ctx.region.destroyed)


def flipnm(search, level=1):
    """Try to remove the edge of ``search``; returns ``(done, m)``.

    On success ``m`` is the number of cells in the new configuration
    (``2n - 4`` for a plain removal), otherwise the current ring size. Must
    be followed by :func:`flipnm_post` on the same search.
    """
    if level < 0:
        raise ValueError("level must be non-negative")
    done = _flipnm(search, level)
    search.done = done
    if done:
        return True, len(search.ctx.region.created)
    return False, search.n


def flipnm_post(search, undo=False):
    """Release the records of ``search``; with ``undo`` reverse its flips first."""
    for rec in reversed(search.records):
        if undo:
            _undo(search, rec)
        elif rec.child is not None:
            flipnm_post(rec.child, undo=False)
    search.records.clear()
    if undo:
        search.done = False


# -- search internals --------------------------------------------------------

def _exempt(search, verts):
    vs = set(verts)
    return any(x in vs and y in vs for x, y in search.chain_edges())


def _filter_ok(search, cells):
    ctx = search.ctx
    if ctx.criterion is None:
        return True
    for c in cells:
        if _exempt(search, c):
            continue
        if not _passes(ctx.cache.get(c), ctx.baseline, ctx.criterion):
            return False
    return True


def _try_flip32(search):
    mesh, ctx = search.mesh, search.ctx
    a, b = search.a, search.b
    tets = search.tets
    if any(t is None for t in tets):
        raise CorruptRecord(f"ring of [{a}, {b}] is out of sync with the mesh")
    if flip32_check(mesh, a, b) is None:
        return False
    p0, p1, p2 = search.apexes
    if not _filter_ok(search, ((p0, p1, p2, a), (p0, p1, p2, b))):
        return False
    flip32(mesh, a, b, journal=ctx.region, check=False)
    ctx.flips += 1
    search.records.append(FlipRecord("flip32"))
    if search.parent is None:
        if ctx.accept is not None:
            ok = bool(ctx.accept(search))
        elif ctx.criterion is not None:
            ok = _region_improves(search)
        else:
            ok = True
        if not ok:
            _undo(search, search.records.pop())
            return False
    return True


def _region_improves(search):
    ctx = search.ctx
    new = [ctx.cache.get(k) for k in ctx.region.created]
    return objective(new, ctx.criterion) > ctx.baseline


def _try_flip23(search, i):
    mesh, ctx = search.mesh, search.ctx
    a, b, ap = search.a, search.b, search.apexes
    n = len(ap)
    p, pm, pp = ap[i], ap[i - 1], ap[(i + 1) % n]
    t_prev = mesh.find_tet((a, b, pm, p))
    t_cur = mesh.find_tet((a, b, p, pp))
    if t_prev is None or t_cur is None:
        raise CorruptRecord(f"ring of [{a}, {b}] is out of sync with the mesh")
    if t_prev in search.protected or t_cur in search.protected:
        return False
    if flip23_check(mesh, (a, b, p)) is None:
        return False
    if not _filter_ok(search, ((pm, pp, b, p), (pm, pp, p, a))):
        return False
    flip23(mesh, (a, b, p), journal=ctx.region, check=False)
    ctx.flips += 1
    ap.pop(i)
    search.records.append(FlipRecord("flip23", i, p))
    return True


def _state_key(search, level):
    r = search.ctx.region
    return (tuple(search.chain_edges()), level, frozenset(r.created), frozenset(r.destroyed))


def _ring_matches(mesh, a, b, expected):
    ids = mesh.vertex_tets[a] & mesh.vertex_tets[b]
    if len(ids) != len(expected):
        return False
    star = edge_star(mesh, a, b)
    if not star.closed:
        return False
    got = star.apexes
    k = got.index(expected[0]) if expected[0] in got else -1
    return k >= 0 and got[k:] + got[:k] == list(expected)


def _flipnm(search, level):
    ctx = search.ctx
    n = search.n
    if n == 3:
        return _try_flip32(search)
    if n < 3 or ctx.exhausted:
        return False
    key = None
    if ctx.backtrack:
        key = _state_key(search, level)
        if key in ctx.failed:
            return False

    # step 2: shrink the ring by flipping faces [a, b, p_i]
    for i in range(n):
        if ctx.exhausted:
            break
        if i >= search.n:
            break
        if not _try_flip23(search, i):
            continue
        if _flipnm(search, level):
            return True
        if not ctx.backtrack:
            return False
        _undo(search, search.records.pop())

    # step 3: remove an adjacent edge [a, p_i] or [b, p_i]
    if level > 0:
        for i in range(search.n):
            for x in (search.a, search.b):
                if ctx.exhausted:
                    break
                y = search.apexes[i]
                if _step3_child(search, i, x, y, level):
                    if _flipnm(search, level):
                        return True
                    if not ctx.backtrack:
                        return False
                    _undo(search, search.records.pop())

    if key is not None and not ctx.exhausted:
        ctx.failed.add(key)
    return False


def _step3_child(search, i, x, y, level):
    mesh = search.mesh
    ring_tets = set(search.tets)
    if mesh.edge_tets(x, y) & search.protected:
        return False
    try:
        child = FlipSearch(mesh, x, y, _parent=search,
                           _protected=frozenset(search.protected | ring_tets))
    except NotFlippable:
        return False
    done = _flipnm(child, level - 1)
    if done:
        expected = search.apexes[:i] + search.apexes[i + 1:]
        if _ring_matches(mesh, search.a, search.b, expected):
            p = search.apexes.pop(i)
            search.records.append(FlipRecord("flipnm", i, p, child))
            return True
    flipnm_post(child, undo=True)
    return False


def _undo(search, rec):
    mesh, ctx = search.mesh, search.ctx
    a, b = search.a, search.b
    if rec.kind == "flip23":
        ap = search.apexes
        n = len(ap)
        pm = ap[rec.position - 1] if rec.position > 0 else ap[n - 1]
        pp = ap[rec.position % n] if n else None
        if n < 2 or len(mesh.vertex_tets[pm] & mesh.vertex_tets[pp]) != 3:
            raise CorruptRecord(f"cannot reverse flip23 at position {rec.position}")
        flip32(mesh, pm, pp, journal=ctx.region, check=False)
        ap.insert(rec.position, rec.apex)
    elif rec.kind == "flip32":
        p0, p1, p2 = search.apexes
        if face_key(p0, p1, p2) not in mesh.faces:
            raise CorruptRecord("cannot reverse flip32: face missing")
        flip23(mesh, (p0, p1, p2), journal=ctx.region, check=False)
    elif rec.kind == "flipnm":
        flipnm_post(rec.child, undo=True)
        search.apexes.insert(rec.position, rec.apex)
    else:
        raise CorruptRecord(f"unknown record kind {rec.kind!r}")


# -- edge removal and lazy pass ------------------------------------------------

def remove_edge(mesh, a, b, level=1, criterion=None, backtrack=True, budget=DEFAULT_BUDGET):
    """Remove ``[a, b]`` if possible; the mesh is unchanged when it is not."""
    search = FlipSearch(mesh, a, b, criterion=criterion, backtrack=backtrack, budget=budget)
    done, _ = flipnm(search, level)
    flipnm_post(search, undo=not done)
    return done


@dataclass
class LazyStats:
    removals: int = 0
    attempts: int = 0
    sweeps: int = 0
    trace: list = field(default_factory=list)


def _interior_edges_by_quality(mesh, restrict=None):
    arr, _ = mesh.tet_array()
    if len(arr) == 0:
        return []
    theta_min = dihedral_angles_array(mesh.points, arr).min(axis=1)
    pairs = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
    e = arr[:, pairs].reshape(-1, 2)
    e.sort(axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.ravel()
    local = np.full(len(uniq), np.inf)
    np.minimum.at(local, inv, np.repeat(theta_min, 6))
    btris = mesh.boundary_triangles()
    boundary = set()
    for u, v, w in btris.tolist():
        boundary.update({tuple(sorted((u, v))), tuple(sorted((v, w))), tuple(sorted((u, w)))})
    order = np.argsort(local, kind="stable")
    out = []
    for k in order:
        edge = (int(uniq[k, 0]), int(uniq[k, 1]))
        if edge in boundary:
            continue
        if restrict is not None and edge[0] not in restrict and edge[1] not in restrict:
            continue
        out.append(edge)
    return out


def lazy_pass(mesh, criterion=FlipCriterion.MIN_MAX_DIHEDRAL, level=1,
              max_sweeps=50, budget=DEFAULT_BUDGET, trace=False):
    """Sweep interior edges, committing the first improving removal per edge.

    Edges are visited worst first (by the smallest dihedral angle around
    them). Sweeps repeat until one makes no removal. After the first sweep
    only edges near vertices touched by a removal are revisited, since the
    search outcome for any other edge cannot have changed.

    Returns a :class:`LazyStats`.
    """
    stats = LazyStats()
    cache = QualityCache(mesh)
    restrict = None
    while stats.sweeps < max_sweeps:
        stats.sweeps += 1
        touched = set()
        removed = 0
        for a, b in _interior_edges_by_quality(mesh, restrict):
            if not mesh.has_edge(a, b):
                continue
            try:
                search = FlipSearch(mesh, a, b, criterion=criterion, backtrack=True,
                                    budget=budget, cache=cache)
            except NotFlippable:
                continue
            stats.attempts += 1
            before = search.ctx.baseline
            done, _ = flipnm(search, level)
            if done:
                created = search.ctx.region.created
                after = objective([cache.get(k) for k in created], criterion)
                for k in created:
                    touched.update(k)
                flipnm_post(search, undo=False)
                removed += 1
            else:
                after = None
                flipnm_post(search, undo=True)
            if trace:
                stats.trace.append({"edge": (a, b), "level": level, "accepted": done,
                                    "before": before, "after": after})
        stats.removals += removed
        if removed == 0:
            break
        if level >= 2:
            restrict = None
        else:
            near = set(touched)
            for v in touched:
                for t in mesh.vertex_tets[v]:
                    near.update(mesh.tets[t])
            restrict = near
    log.debug("lazy pass (%s, level %d): %d removals in %d sweeps",
              criterion.value, level, stats.removals, stats.sweeps)
    return stats
