"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed at the end."""

import time

import numpy as np
import pytest

from tetopt import io, rbf
from tetopt.boundary import classify_boundary
from tetopt.errors import NotFlippable
from tetopt.flips import FlipCriterion, FlipSearch, flipnm, flipnm_post
from tetopt.generate import rand_cube, random_ring, structured_cube
from tetopt.mesh import canonical_form, mesh_hash, signed_volumes, validate
from tetopt.quality import EnergyParams, energy_from
from tetopt.scheme import ImproveConfig, improve
from tetopt.smoothing import IntegratorConfig, assemble_from, integrate

from _oracle import ring_oracle
from _vtk import read_vtk
from conftest import FIXTURES, record_acceptance

# reference figures for the random cube run; logged for comparison only
SOFT_TARGETS = {"theta_min": 40.0, "theta_max": 130.0, "mean": 69.70, "stddev": 15.74}


def _fd_gradient(points, tets, prm, h):
    g = np.zeros_like(points)
    for i in range(len(points)):
        for k in range(3):
            xp = points.copy()
            xm = points.copy()
            xp[i, k] += h
            xm[i, k] -= h
            g[i, k] = (energy_from(xp, tets, prm) - energy_from(xm, tets, prm)) / (2 * h)
    return g


def test_1_gradient_consistency():
    t0 = time.perf_counter()
    prm = EnergyParams()
    worst = 0.0
    for seed in range(20):
        m = structured_cube(3, perturb=0.3, seed=seed)
        arr, _ = m.tet_array()
        assert len(arr) <= 200
        V = assemble_from(m.points, arr, prm)
        G = _fd_gradient(m.points, arr, prm, 1e-6 * m.bbox_diag())
        # error per vertex relative to the largest gradient entry of the mesh
        err = np.linalg.norm(V + G, axis=1).max() / np.linalg.norm(G, axis=1).max()
        worst = max(worst, err)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-5 and dt < 30
    record_acceptance(1, ok, f"max relative error {worst:.2e} (<= 1e-5), {dt:.1f} s")
    assert ok


def test_2_energy_monotonicity_and_validity():
    t0 = time.perf_counter()
    m = structured_cube(5, perturb=0.3, seed=11)
    geo = classify_boundary(m)
    rep = integrate(m, geo, IntegratorConfig(t_end=10.0))
    arr, _ = m.tet_array()
    E = np.array(rep.energies)
    rise = float(np.max(np.diff(E))) if len(E) > 1 else 0.0
    tol = 1e-12 * E[0]
    vmin = float(signed_volumes(m.points, arr).min())
    dt = time.perf_counter() - t0
    ok = rise <= tol and vmin > 0 and rep.accepted > 0 and dt < 60
    record_acceptance(2, ok, f"{rep.accepted} steps, I {E[0]:.4g} -> {E[-1]:.4g}, max rise {rise:.2e} "
                             f"(tol {tol:.1e}), min volume {vmin:.2e}, {dt:.1f} s")
    validate(m)
    assert ok


def _forced_fail_cases(n_cases):
    rng = np.random.default_rng(2024)
    meshes = [rand_cube(n_interior=25, n_face=3, n_edge=1, seed=s) for s in range(5)]
    edges = []
    for m in meshes:
        for e in m.edges():
            try:
                FlipSearch(m, *e)
            except NotFlippable:
                continue
            edges.append((m, e))
    for k in range(n_cases):
        level = k % 3
        backtrack = bool(rng.integers(2))
        if k % 2:
            m, (a, b) = edges[int(rng.integers(len(edges)))]
        else:
            m, (a, b) = random_ring(int(rng.integers(3, 9)), rng), (0, 1)
        yield m, a, b, level, backtrack


def test_3_flip_reversal_identity():
    t0 = time.perf_counter()
    bad = 0
    total = 0
    for m, a, b, level, backtrack in _forced_fail_cases(500):
        form = canonical_form(m)
        h = mesh_hash(m)
        s = FlipSearch(m, a, b, backtrack=backtrack, accept=lambda s: False)
        done, _ = flipnm(s, level)
        flipnm_post(s, undo=True)
        total += 1
        if done or mesh_hash(m) != h or canonical_form(m) != form:
            bad += 1
    dt = time.perf_counter() - t0
    ok = bad == 0 and total == 500 and dt < 30
    record_acceptance(3, ok, f"{total - bad}/{total} searches restored exactly, {dt:.1f} s")
    assert ok


def test_4_lazy_flip_optimality_coverage():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    improvable = found = contradicted = missed = 0
    for k in range(200):
        n = (4, 5, 6)[k % 3]
        m = random_ring(n, rng)
        s = FlipSearch(m, 0, 1, criterion=FlipCriterion.MIN_MAX_DIHEDRAL, backtrack=True, budget=None)
        base, res = ring_oracle(m.points, 0, 1, s.apexes)
        better = {key for key, (valid, sc) in res.items() if valid and sc > base}
        done, _ = flipnm(s, 1)
        if done:
            arr, _ = m.tet_array()
            key = frozenset(frozenset(int(x) for x in t if x not in (0, 1)) for t in arr)
            if key not in better:
                contradicted += 1
        flipnm_post(s, undo=True)
        if better:
            improvable += 1
            if done:
                found += 1
            else:
                missed += 1
    dt = time.perf_counter() - t0
    ok = missed == 0 and contradicted == 0 and dt < 60
    record_acceptance(4, ok, f"oracle improvable {improvable}/200, lazy found {found}, missed {missed}, "
                             f"contradicted {contradicted}, {dt:.1f} s")
    assert ok


def _fibonacci_sphere(n, offset=0.0):
    k = np.arange(n) + 0.5 + offset
    phi = np.arccos(1 - 2 * k / n)
    th = np.pi * (1 + 5 ** 0.5) * k
    return np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])


def test_5_rbf_reconstruction():
    t0 = time.perf_counter()
    X = _fibonacci_sphere(200)
    diag = float(np.linalg.norm(X.max(axis=0) - X.min(axis=0)))
    s = rbf.fit(X, X, epsilon=0.01 * diag)
    held = _fibonacci_sphere(150, offset=0.37)
    s_err = float(np.max(np.abs(s.eval(held))))
    d = np.random.default_rng(5).normal(size=(100, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    Y = s.project_many(1.2 * d)
    p_err = float(np.max(np.abs(np.linalg.norm(Y, axis=1) - 1.0)))
    f = 0.3 - 1.5 * s.centers[:, 0] + 2.0 * s.centers[:, 1] + 0.7 * s.centers[:, 2]
    alpha, beta = rbf.solve_interpolant(s.centers, f)
    rep = float(np.linalg.norm(alpha) / np.linalg.norm(beta))
    dt = time.perf_counter() - t0
    ok = s_err <= 1e-3 and p_err <= 2e-3 and rep <= 1e-6 and dt < 30
    record_acceptance(5, ok, f"held-out |s| {s_err:.1e}, projection error {p_err:.1e}, "
                             f"|alpha|/|beta| {rep:.1e}, {dt:.1f} s")
    assert ok


@pytest.fixture(scope="module")
def rand_run():
    m = rand_cube(seed=0)
    t0 = time.perf_counter()
    out, rep = improve(m, ImproveConfig(theta_lim=30.0))
    return m, out, rep, time.perf_counter() - t0


@pytest.mark.slow
def test_6_end_to_end_improvement(rand_run):
    m, out, rep, dt = rand_run
    validate(out)
    f, i = rep.final, rep.initial
    ok = f.theta_min >= 30.0 and 66.0 <= f.mean <= 72.0 and f.stddev < i.stddev and dt < 600
    soft = ", ".join(f"{k} {getattr(f, k):.2f} (ref {v})" for k, v in SOFT_TARGETS.items())
    record_acceptance(6, ok, f"{i.n_tets} -> {f.n_tets} tets, Q {i.theta_min:.2f} -> {f.theta_min:.2f}, "
                             f"stddev {i.stddev:.2f} -> {f.stddev:.2f}, {rep.reason}, {dt:.0f} s; {soft}")
    assert ok


@pytest.mark.slow
def test_7_scheme_monotonicity(rand_run):
    _, _, rep, _ = rand_run
    mm = [p for p in rep.passes if p.criterion == "minmax"]
    drops = [p for p in mm if p.q_after < p.q_before]
    ok = not drops and rep.final.theta_min >= rep.initial.theta_min and len(mm) > 0
    record_acceptance(7, ok, f"{len(mm)} minmax passes, {len(drops)} decreased Q; "
                             f"Q {rep.initial.theta_min:.2f} -> {rep.final.theta_min:.2f}")
    assert ok


def test_8_io_round_trip(tmp_path):
    t0 = time.perf_counter()
    bases = sorted({p.with_suffix("") for p in FIXTURES.glob("*.node")})
    bad = []
    for base in bases:
        mesh = io.read_tetgen(base)
        out = tmp_path / (base.name + ".vtk")
        io.write_vtk(mesh, out)
        pts, cells, types, _ = read_vtk(out)
        arr, _ = mesh.tet_array()
        same_cells = np.array_equal(cells, arr) and np.all(types == io.VTK_TETRA)
        same_pts = pts.shape == mesh.points.shape and all(
            format(a, ".17g") == format(b, ".17g") for a, b in zip(pts.ravel(), mesh.points.ravel()))
        if not (same_cells and same_pts):
            bad.append(base.name)
    dt = time.perf_counter() - t0
    ok = not bad and len(bases) >= 5 and dt < 5
    record_acceptance(8, ok, f"{len(bases) - len(bad)}/{len(bases)} fixtures identical, {dt:.2f} s")
    assert ok
