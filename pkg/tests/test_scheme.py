import numpy as np
import pytest

from tetopt.errors import InvalidInput
from tetopt.generate import ellipsoid, structured_cube
from tetopt.mesh import mesh_hash, validate
from tetopt.scheme import ImproveConfig, improve, min_angle_trace
from tetopt.smoothing import IntegratorConfig


def test_already_good_mesh_is_returned_unchanged():
    m = structured_cube(2)
    out, rep = improve(m, ImproveConfig(theta_lim=30))
    assert rep.reason == "target"
    assert rep.n_iterations == 0
    assert mesh_hash(out) == mesh_hash(m)


def test_input_mesh_is_not_modified():
    m = structured_cube(3, perturb=0.35, seed=2)
    h = mesh_hash(m)
    improve(m, ImproveConfig(theta_lim=25, max_outer_iters=1))
    assert mesh_hash(m) == h


def test_improve_small_cube():
    m = structured_cube(3, perturb=0.35, seed=2)
    out, rep = improve(m, ImproveConfig(theta_lim=25, max_outer_iters=3))
    validate(out)
    assert rep.final.theta_min >= rep.initial.theta_min
    assert rep.reason in ("target", "fixpoint", "iteration cap")
    assert 1 <= rep.n_iterations <= 3
    crit = [it.extra["criterion"] for it in rep.iterations]
    assert crit[:2] == ["minmax", "aspect"][: len(crit[:2])]
    for p in rep.passes:
        if p.criterion == "minmax":
            assert p.q_after >= p.q_before
    assert len(min_angle_trace(rep)) == len(rep.passes)
    d = rep.to_dict()
    assert d["counts"]["flips"] == rep.flips
    assert len(rep.rows()) == rep.n_iterations + 1


def test_fixed_boundary_keeps_boundary():
    m = structured_cube(3, perturb=0.35, seed=3)
    bnd = sorted(map(tuple, m.points[m.boundary_vertices()]))
    out, _ = improve(m, ImproveConfig(theta_lim=25, max_outer_iters=1, fix_boundary=True))
    validate(out)
    assert sorted(map(tuple, out.points[out.boundary_vertices()])) == bnd


def test_rbf_run_on_ellipsoid():
    m = ellipsoid(level=1, n_interior=40, seed=2)
    out, rep = improve(m, ImproveConfig(theta_lim=20, max_outer_iters=1, use_rbf=True,
                                        integrator=IntegratorConfig(t_end=1.0)))
    validate(out)
    assert rep.final.theta_min > rep.initial.theta_min


@pytest.mark.parametrize("kw", [dict(theta_lim=0), dict(theta_lim=75), dict(max_outer_iters=0),
                                dict(flip_level=3), dict(epsilon_rel=0.0)])
def test_config_validation(kw):
    with pytest.raises(InvalidInput):
        ImproveConfig(**kw)
