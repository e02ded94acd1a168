"""The full improvement scheme: smoothing, lazy flips and local repairs in nested loops.

Loop structure, from the inside out:

1. smooth, re-project curved boundary vertices, lazy flips; until no vertex
   moved, no flip was done, or ``Q >= theta_lim``;
2. loop 1, then contract short edges and flip; until no contraction or
   ``Q >= theta_lim``;
3. loop 2, then split long edges, re-fit the surface and flip; until no
   split or ``Q > theta_lim``;
4. loop 3, then split bad cells and flip; until none was split or
   ``Q > theta_lim``;
5. loop 4, then switch the flip criterion; until loop 4 did nothing or
   ``Q > theta_lim``.

``Q`` is the smallest dihedral angle of the mesh.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import rbf
from .boundary import classify_boundary
from .errors import InvalidInput
from .flips import FlipCriterion, lazy_pass
from .local_ops import LengthPolicy, contract_short_edges, split_bad_tets, split_long_edges
from .mesh import validate
from .quality import OPTIMAL_DIHEDRAL, EnergyParams, mesh_min_angle, mesh_stats
from .smoothing import IntegratorConfig, integrate

log = logging.getLogger(__name__)


@dataclass
class ImproveConfig:
    theta_lim: float = 30.0
    max_outer_iters: int = 10
    max_inner_iters: int = 50
    flip_level: int = 1
    energy: EnergyParams = field(default_factory=EnergyParams)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    fix_boundary: bool = False
    use_rbf: bool = False
    epsilon_rel: float = 0.01
    move_tol: float = 1e-9  # relative to the bounding box diagonal
    check_validity: bool = True

    def __post_init__(self):
        if not 0.0 < self.theta_lim < OPTIMAL_DIHEDRAL:
            raise InvalidInput(f"theta_lim must lie in (0, {OPTIMAL_DIHEDRAL:.4f}), got {self.theta_lim}")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise InvalidInput("iteration caps must be at least 1")
        if not 0 <= self.flip_level <= 2:
            raise InvalidInput("flip_level must be 0, 1 or 2")
        if not self.epsilon_rel > 0.0:
            raise InvalidInput("epsilon_rel must be positive")


@dataclass
class PassRecord:
    """One lazy flip pass, with Q immediately before and after it."""

    outer: int
    stage: str
    criterion: str
    q_before: float
    q_after: float
    removals: int


@dataclass
class ImproveReport:
    iterations: list = field(default_factory=list)
    passes: list = field(default_factory=list)
    smoothing_steps: int = 0
    smoothing_rejected: int = 0
    flips: int = 0
    contractions: int = 0
    splits: int = 0
    bad_splits: int = 0
    reason: str = ""
    initial: object = None
    final: object = None
    q_history: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def n_iterations(self):
        return len(self.iterations)

    def to_dict(self):
        return {
            "reason": self.reason,
            "iterations": [it.to_dict() for it in self.iterations],
            "passes": [vars(p) for p in self.passes],
            "counts": {
                "smoothing_steps": self.smoothing_steps,
                "smoothing_rejected": self.smoothing_rejected,
                "flips": self.flips,
                "contractions": self.contractions,
                "splits": self.splits,
                "bad_splits": self.bad_splits,
            },
            "initial": self.initial.to_dict() if self.initial is not None else None,
            "final": self.final.to_dict() if self.final is not None else None,
            "q_history": list(self.q_history),
            "seconds": self.seconds,
        }

    def rows(self):
        """Per outer iteration summary rows for CSV output."""
        head = ["iteration", "criterion", "theta_min", "theta_max", "mean", "stddev",
                "ar_max", "energy", "n_tets", "n_verts"]
        out = [head]
        for k, s in enumerate(self.iterations, 1):
            out.append([k, s.extra.get("criterion", ""), s.theta_min, s.theta_max, s.mean,
                        s.stddev, s.ar_max, s.energy, s.n_tets, s.n_verts])
        return out


class _Run:
    def __init__(self, mesh, cfg):
        self.mesh = mesh
        self.cfg = cfg
        self.report = ImproveReport()
        if cfg.fix_boundary:
            model = "fixed"
        elif cfg.use_rbf:
            model = "curved"
        else:
            model = "plc"
        self.geo = classify_boundary(mesh, model)
        if cfg.use_rbf and not cfg.fix_boundary:
            self.geo.surface = rbf.fit_mesh(mesh, cfg.epsilon_rel)
        self.criterion = FlipCriterion.MIN_MAX_DIHEDRAL
        self.outer = 0

    def q(self):
        return mesh_min_angle(self.mesh)

    def _compact(self):
        vmap = self.mesh.compact()
        self.geo.remap(vmap)
        if self.cfg.check_validity:
            validate(self.mesh)

    def flips(self, stage):
        q0 = self.q()
        st = lazy_pass(self.mesh, self.criterion, self.cfg.flip_level)
        q1 = self.q()
        self.report.flips += st.removals
        self.report.passes.append(PassRecord(self.outer, stage, self.criterion.value, q0, q1, st.removals))
        self.report.q_history.append(q1)
        return st.removals

    def smooth(self):
        diag = self.mesh.bbox_diag()
        rep = integrate(self.mesh, self.geo, self.cfg.integrator, self.cfg.energy)
        self.report.smoothing_steps += rep.accepted
        self.report.smoothing_rejected += rep.rejected
        return rep.max_displacement > self.cfg.move_tol * diag

    def refit(self):
        if self.geo.surface is not None:
            self.geo.surface = rbf.fit_mesh(self.mesh, self.cfg.epsilon_rel)

    def loop1(self):
        lim = self.cfg.theta_lim
        for _ in range(self.cfg.max_inner_iters):
            moved = self.smooth()
            flipped = self.flips("smooth")
            if not moved or flipped == 0 or self.q() >= lim:
                break

    def loop2(self):
        lim = self.cfg.theta_lim
        ops = 0
        for _ in range(self.cfg.max_inner_iters):
            self.loop1()
            n = contract_short_edges(self.mesh, self.geo, LengthPolicy.from_mesh(self.mesh),
                                     fix_boundary=self.cfg.fix_boundary)
            self.report.contractions += n
            ops += n
            self._compact()
            self.flips("contract")
            if n == 0 or self.q() >= lim:
                break
        return ops

    def loop3(self):
        lim = self.cfg.theta_lim
        ops = 0
        for _ in range(self.cfg.max_inner_iters):
            ops += self.loop2()
            n = split_long_edges(self.mesh, self.geo, self.geo.surface,
                                 LengthPolicy.from_mesh(self.mesh), fix_boundary=self.cfg.fix_boundary)
            self.report.splits += n
            ops += n
            self._compact()
            if n:
                self.refit()
            self.flips("split")
            if n == 0 or self.q() > lim:
                break
        return ops

    def loop4(self):
        lim = self.cfg.theta_lim
        ops = 0
        for _ in range(self.cfg.max_inner_iters):
            ops += self.loop3()
            n = split_bad_tets(self.mesh, lim, self.geo)
            self.report.bad_splits += n
            ops += n
            self._compact()
            self.flips("bad")
            if n == 0 or self.q() > lim:
                break
        return ops


def improve(mesh, cfg=None):
    """Improve a copy of ``mesh`` towards ``Q > cfg.theta_lim``.

    Returns ``(mesh, report)``.
    """
    cfg = cfg or ImproveConfig()
    t0 = time.perf_counter()
    work = mesh.copy()
    validate(work)
    run = _Run(work, cfg)
    rep = run.report
    rep.initial = mesh_stats(work, cfg.energy)
    rep.q_history.append(rep.initial.theta_min)
    if rep.initial.theta_min > cfg.theta_lim:
        rep.reason = "target"
        rep.final = rep.initial
        rep.seconds = time.perf_counter() - t0
        return work, rep
    reason = "iteration cap"
    for k in range(cfg.max_outer_iters):
        run.outer = k + 1
        before = rep.flips + rep.contractions + rep.splits + rep.bad_splits
        run.loop4()
        ops = rep.flips + rep.contractions + rep.splits + rep.bad_splits - before
        stats = mesh_stats(work, cfg.energy)
        stats.extra["criterion"] = run.criterion.value
        stats.extra["operations"] = ops
        rep.iterations.append(stats)
        log.info("outer %d (%s): Q = %.3f, %d tets, %d operations",
                 k + 1, run.criterion.value, stats.theta_min, stats.n_tets, ops)
        run.criterion = run.criterion.other()
        if stats.theta_min > cfg.theta_lim:
            reason = "target"
            break
        if ops == 0:
            reason = "fixpoint"
            break
    validate(work)
    rep.final = mesh_stats(work, cfg.energy)
    rep.reason = reason
    rep.seconds = time.perf_counter() - t0
    return work, rep


def min_angle_trace(report):
    """Q after every lazy pass, as an array."""
    return np.array([p.q_after for p in report.passes])
