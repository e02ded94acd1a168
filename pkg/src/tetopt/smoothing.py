"""Moving-mesh smoothing: gradient flow of the meshing energy.

Vertex velocities are the negative energy gradient, assembled from closed
form element contributions. Boundary vertices have their velocities
constrained to their facet, segment or fitted surface, and the resulting
ODE is integrated with an embedded Dormand-Prince 5(4) pair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryKind
from .errors import DegenerateCell, MissingSurface, StepFloorReached
from .mesh import signed_volumes
from .quality import EnergyParams, element_terms, energy_density

log = logging.getLogger(__name__)


def _velocity_rows(E, Einv, Eh, J, detJ, params):
    d, p, th = params.d, params.p, params.theta
    tr = np.einsum("nij,nij->n", J, J)
    G = energy_density(J, detJ, params)
    dG_dJ = (d * p * th * tr ** (d * p / 2.0 - 1.0))[:, None, None] * np.transpose(J, (0, 2, 1))
    dG_ddet = p * (1.0 - 2.0 * th) * d ** (d * p / 2.0) * detJ ** (p - 1.0)
    # det(Eh) / det(E) is det J
    rows = (-G[:, None, None] * Einv
            + Einv @ dG_dJ @ Eh @ Einv
            + (dG_ddet * detJ)[:, None, None] * Einv)
    v = np.empty((len(E), 4, 3))
    v[:, 1:] = rows
    v[:, 0] = -rows.sum(axis=1)
    return v


def element_velocities(frame, params=None):
    """Local velocities ``v_0..v_3`` of one element as a ``(4, 3)`` array.

    ``-|K| * v_j`` is the gradient of ``|K| G_K`` with respect to vertex j.
    """
    params = params or EnergyParams()
    E = frame.edge_matrix[None]
    Einv = np.linalg.inv(E)
    J = frame.jacobian_inv[None]
    detJ = np.array([frame.det_j])
    return _velocity_rows(E, Einv, frame.ref_edge_matrix, J, detJ, params)[0]


def element_velocities_array(points, tets, params, n_tets=None):
    E, Einv, Eh, J, detJ, vol = element_terms(points, tets, n_tets)
    return _velocity_rows(E, Einv, Eh, J, detJ, params), vol


def assemble_from(points, tets, params):
    """``dx_i/dt = sum_K |K| v^K_{i_K}`` for every vertex, i.e. ``-grad I_h``."""
    tets = np.asarray(tets, dtype=np.int64)
    v, vol = element_velocities_array(points, tets, params)
    out = np.zeros((len(points), 3))
    # np.add.at accumulates in element order, so the reduction is deterministic
    np.add.at(out, tets.ravel(), (vol[:, None, None] * v).reshape(-1, 3))
    return out


def assemble_velocities(mesh, params=None):
    arr, _ = mesh.tet_array()
    return assemble_from(mesh.points, arr, params or EnergyParams())


def adjust_boundary_velocity(v, kind, normal=None, direction=None, surface=None, x=None):
    """Constrain a single velocity vector to its boundary geometry."""
    v = np.asarray(v, dtype=float)
    kind = BoundaryKind(kind)
    if kind == BoundaryKind.FREE:
        return v.copy()
    if kind == BoundaryKind.CORNER:
        return np.zeros(3)
    if kind == BoundaryKind.FACET:
        n = np.asarray(normal, dtype=float)
        return v - np.dot(v, n) * n
    if kind == BoundaryKind.SEGMENT:
        d = np.asarray(direction, dtype=float)
        return np.dot(v, d) * d
    if surface is None:
        raise MissingSurface("curved boundary vertex without a fitted surface")
    g = surface.grad(np.asarray(x, dtype=float)[None])[0]
    g = g / np.linalg.norm(g)
    return v - np.dot(v, g) * g


def adjust_velocities(V, geo, points):
    """Vectorized boundary adjustment of a full velocity field."""
    if geo is None:
        return V
    V = V.copy()
    k = geo.kind[: len(V)]
    f = k == BoundaryKind.FACET
    if f.any():
        n = geo.normal[: len(V)][f]
        V[f] -= np.einsum("ij,ij->i", V[f], n)[:, None] * n
    s = k == BoundaryKind.SEGMENT
    if s.any():
        d = geo.direction[: len(V)][s]
        V[s] = np.einsum("ij,ij->i", V[s], d)[:, None] * d
    V[k == BoundaryKind.CORNER] = 0.0
    c = k == BoundaryKind.CURVED
    if c.any():
        if geo.surface is None:
            raise MissingSurface("curved boundary vertices without a fitted surface")
        g = geo.surface.grad(points[c])
        g /= np.linalg.norm(g, axis=1)[:, None]
        V[c] -= np.einsum("ij,ij->i", V[c], g)[:, None] * g
    return V


@dataclass
class IntegratorConfig:
    t_end: float = 10.0
    abs_tol: float | None = None  # defaults to 1e-8 * I_h(0)
    rel_tol: float = 1e-6
    atol: float = 1e-4
    rtol: float = 1e-4
    max_steps: int = 5000
    h_min: float = 1e-14  # smallest step, as max vertex displacement over bbox diagonal

    def __post_init__(self):
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        for name in ("rel_tol", "atol", "rtol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.abs_tol is not None and self.abs_tol <= 0:
            raise ValueError("abs_tol must be positive")


@dataclass
class StepReport:
    times: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    accepted: int = 0
    rejected_error: int = 0
    rejected_invalid: int = 0
    rejected_energy: int = 0
    stop_reason: str = ""
    max_displacement: float = 0.0

    @property
    def rejected(self):
        return self.rejected_error + self.rejected_invalid + self.rejected_energy

    def rows(self):
        """(step, t, h, energy) rows for CSV output; row 0 is the initial state."""
        hs = [0.0] + list(self.steps)
        return [(i, t, h, e) for i, (t, h, e) in enumerate(zip(self.times, hs, self.energies))]


# Dormand-Prince 5(4) tableau
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_ERR = tuple(b - b4 for b, b4 in zip(_B, _B4))


class _System:
    """Right-hand side plus the admissibility checks used for step rejection."""

    def __init__(self, mesh, geo, params):
        self.tets, _ = mesh.tet_array()
        self.params = params
        self.geo = geo
        self.floor = mesh.volume_floor
        self.btris = mesh.boundary_triangles()
        self.n_tets = len(self.tets)

    def rhs(self, x):
        V = assemble_from(x, self.tets, self.params)
        return adjust_velocities(V, self.geo, x)

    def energy(self, x):
        _, _, _, J, detJ, vol = element_terms(x, self.tets, self.n_tets)
        return float(np.sum(vol * energy_density(J, detJ, self.params)))

    def boundary_normals(self, x):
        P = x[self.btris]
        return np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])

    def admissible(self, x, ref_normals):
        if np.any(signed_volumes(x, self.tets) <= self.floor):
            return False
        if len(self.btris):
            n = self.boundary_normals(x)
            if np.any(np.einsum("ij,ij->i", n, ref_normals) <= 0.0):
                return False
        return True

    def constrain(self, x):
        if self.geo is None:
            return x
        x = self.geo.snap(x)
        c = self.geo.kind[: len(x)] == BoundaryKind.CURVED
        if c.any():
            if self.geo.surface is None:
                raise MissingSurface("curved boundary vertices without a fitted surface")
            x[c] = self.geo.surface.project_many(x[c])
        return x


def _rms(v):
    return float(np.sqrt(np.mean(v * v))) if v.size else 0.0


def integrate(mesh, geo=None, cfg=None, params=None):
    """Smooth ``mesh`` in place by integrating the moving-mesh ODE.

    The connectivity is left untouched. A step is rejected (and the step
    size halved) whenever it would create a non-positive volume, reverse a
    boundary face, or raise the energy; error-controlled rejections shrink
    the step as usual. Integration stops at ``t_end``, when the energy change
    of an accepted step falls below the absolute or relative tolerance, or
    after ``max_steps`` steps.

    Returns a :class:`StepReport`.
    """
    cfg = cfg or IntegratorConfig()
    params = params or EnergyParams()
    if geo is not None:
        geo.sync(mesh.n_vertices)
    sysm = _System(mesh, geo, params)
    x = np.array(mesh.points, copy=True)
    x_start = x.copy()
    diag = mesh.bbox_diag() or 1.0
    report = StepReport()
    I = sysm.energy(x)
    I0 = I
    eps_abs = cfg.abs_tol if cfg.abs_tol is not None else 1e-8 * abs(I0)
    report.times.append(0.0)
    report.energies.append(I)
    atol = cfg.atol * diag

    t = 0.0
    k1 = sysm.rhs(x)
    sc = atol + cfg.rtol * np.abs(x)
    d0, d1 = _rms(x / sc), _rms(k1 / sc)
    h = cfg.t_end if d1 <= 1e-12 else min(cfg.t_end, max(0.01 * d0 / d1, 1e-6))
    stop = "max_steps"
    while report.accepted < cfg.max_steps:
        if t >= cfg.t_end * (1 - 1e-12):
            stop = "t_end"
            break
        h = min(h, cfg.t_end - t)
        vmax = float(np.abs(k1).max()) if k1.size else 0.0
        if h * vmax < cfg.h_min * diag and h < cfg.t_end - t:
            raise StepFloorReached(f"step size {h:.3e} below floor at t = {t:.6g}")
        ks = [k1]
        try:
            for s in range(1, 7):
                xs = x + h * sum(a * k for a, k in zip(_A[s], ks) if a != 0.0)
                ks.append(sysm.rhs(xs))
        except DegenerateCell:
            # an intermediate stage inverted an element
            report.rejected_invalid += 1
            h *= 0.5
            continue
        # the last stage point is the fifth-order solution
        x_new = xs
        err_vec = h * sum(e * k for e, k in zip(_ERR, ks) if e != 0.0)
        scale = atol + cfg.rtol * np.maximum(np.abs(x), np.abs(x_new))
        err = _rms(err_vec / scale)
        if err > 1.0:
            report.rejected_error += 1
            h *= max(0.2, 0.9 * err ** -0.2)
            continue
        ref_n = sysm.boundary_normals(x) if len(sysm.btris) else None
        x_new = sysm.constrain(x_new)
        if not sysm.admissible(x_new, ref_n):
            report.rejected_invalid += 1
            h *= 0.5
            continue
        I_new = sysm.energy(x_new)
        if I_new > I + 1e-14 * abs(I0):
            report.rejected_energy += 1
            h *= 0.5
            continue
        t += h
        report.accepted += 1
        report.steps.append(h)
        report.times.append(t)
        report.energies.append(I_new)
        dI = abs(I_new - I)
        x, I = x_new, I_new
        k1 = sysm.rhs(x)
        if dI <= eps_abs or dI <= cfg.rel_tol * abs(I_new):
            stop = "stagnation"
            break
        fac = 0.9 * err ** -0.2 if err > 0 else 5.0
        h *= min(5.0, max(0.2, fac))
    else:
        stop = "max_steps"
    report.stop_reason = stop
    report.max_displacement = float(np.max(np.linalg.norm(x - x_start, axis=1))) if len(x) else 0.0
    mesh.set_points(x)
    log.debug("smoothing: %d steps (%d rejected), I %.6g -> %.6g, %s",
              report.accepted, report.rejected, I0, I, stop)
    return report

