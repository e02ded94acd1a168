"""Command-line driver.

Exit codes: 0 success, 1 usage error, 2 input error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import generate, io, rbf
from .boundary import classify_boundary
from .errors import DegenerateCell, IndexOutOfRange, InvalidInput, InvalidMesh, MeshError, ParseError
from .flips import FlipCriterion, lazy_pass
from .mesh import validate
from .quality import EnergyParams, mesh_stats
from .scheme import ImproveConfig, improve
from .smoothing import IntegratorConfig, integrate

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("tetopt")


class _UsageError(Exception):
    pass


class _InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _add_energy(p):
    p.add_argument("--theta", type=float, default=1.0 / 3.0, help="energy weight (0, 0.5]")
    p.add_argument("--p", type=float, default=1.5, help="energy exponent > 1")
    p.add_argument("--t-end", type=float, default=10.0, help="smoothing pseudo-time horizon")


def _add_common(p, mesh_in=True):
    if mesh_in:
        p.add_argument("input", help="TetGen base path (reads .node/.ele, and .face if present)")
    p.add_argument("--out", help="output mesh: .vtk, .off, or a TetGen base path")
    p.add_argument("--stats-out", help="CSV file with quality statistics rows")
    p.add_argument("--report", help="JSON report path")
    p.add_argument("--figures", help="directory for report figures (PNG)")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized generation")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="tetopt", description="Tetrahedral mesh quality improvement.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("improve", help="full improvement scheme")
    _add_common(p)
    _add_energy(p)
    p.add_argument("--theta-lim", type=float, default=30.0, help="target minimum dihedral angle")
    p.add_argument("--flip-level", type=int, choices=(0, 1, 2), default=1)
    p.add_argument("--fix-boundary", action="store_true")
    p.add_argument("--rbf", action="store_true", help="treat the boundary as a curved surface")
    p.add_argument("--epsilon-rel", type=float, default=0.01, help="RBF offset over bbox diagonal")
    p.add_argument("--max-outer", type=int, default=10)

    p = sub.add_parser("smooth", help="moving-mesh smoothing only")
    _add_common(p)
    _add_energy(p)
    p.add_argument("--fix-boundary", action="store_true")
    p.add_argument("--rbf", action="store_true")
    p.add_argument("--epsilon-rel", type=float, default=0.01)

    p = sub.add_parser("flip", help="lazy flips only")
    _add_common(p)
    p.add_argument("--flip-level", type=int, choices=(0, 1, 2), default=1)
    p.add_argument("--criterion", choices=("minmax", "aspect"), default="minmax")

    p = sub.add_parser("stats", help="quality statistics of a mesh")
    _add_common(p)

    p = sub.add_parser("generate", help="write a synthetic test mesh")
    _add_common(p, mesh_in=False)
    p.add_argument("kind", choices=("rand", "cube", "lshape", "ellipsoid"))
    p.add_argument("--size", type=int, default=None,
                   help="interior points (rand, ellipsoid) or grid cells per side (cube, lshape)")
    p.add_argument("--perturb", type=float, default=0.0, help="grid perturbation (cube, lshape)")
    return parser


def _read(path):
    files = io.MeshFileSet.from_base(path)
    for f in (files.node, files.ele):
        if not f.exists():
            raise _InputError(f"missing input file {f}")
    try:
        mesh = io.read_tetgen(files)
        validate(mesh)
    except (OSError, UnicodeDecodeError, ParseError, DegenerateCell, IndexOutOfRange, InvalidMesh) as exc:
        raise _InputError(str(exc)) from exc
    return mesh


def _write_mesh(mesh, out):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".vtk":
        io.write_vtk(mesh, out)
    elif out.suffix == ".off":
        io.write_off(mesh, out)
    else:
        io.write_tetgen(mesh, out)


def _emit_stats(rows, path):
    """Stats rows go to ``path`` if given and always to standard output."""
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerows(rows)
    if path:
        io.write_rows(rows, path)


def _stats_rows(labelled):
    first = labelled[0][1]
    head = ["stage"] + io.stats_header(first)[1:]
    rows = [head]
    for label, s in labelled:
        rows.append([label] + io.stats_row(0, s)[1:])
    return rows


def _energy(args):
    return EnergyParams(theta=args.theta, p=args.p)


def _figures(args, labelled, q=None, theta_lim=None, trace=None):
    if not args.figures:
        return
    from . import plotting

    d = Path(args.figures)
    plotting.dihedral_histogram([s for _, s in labelled], [k for k, _ in labelled], d / "dihedral_hist.png")
    if q is not None and len(q):
        plotting.q_history(q, d / "q_history.png", theta_lim)
    if trace is not None and len(trace.times) > 1:
        plotting.energy_trace(trace.times, trace.energies, d / "energy.png")


def _cmd_improve(args):
    cfg = ImproveConfig(theta_lim=args.theta_lim, max_outer_iters=args.max_outer,
                        flip_level=args.flip_level, energy=_energy(args),
                        integrator=IntegratorConfig(t_end=args.t_end), fix_boundary=args.fix_boundary,
                        use_rbf=args.rbf, epsilon_rel=args.epsilon_rel)
    mesh = _read(args.input)
    out, rep = improve(mesh, cfg)
    labelled = [("initial", rep.initial)] + [(f"iter{k}", s) for k, s in enumerate(rep.iterations, 1)]
    labelled.append(("final", rep.final))
    _emit_stats(_stats_rows(labelled), args.stats_out)
    if args.out:
        _write_mesh(out, args.out)
    if args.report:
        d = rep.to_dict()
        d["seed"] = args.seed
        io.write_json(d, args.report)
    _figures(args, [("initial", rep.initial), ("final", rep.final)], rep.q_history, args.theta_lim)
    log.info("finished: %s", rep.reason)
    return EXIT_OK


def _cmd_smooth(args):
    mesh = _read(args.input)
    before = mesh_stats(mesh, _energy(args))
    if args.fix_boundary:
        geo = classify_boundary(mesh, "fixed")
    elif args.rbf:
        geo = classify_boundary(mesh, "curved")
        geo.surface = rbf.fit_mesh(mesh, args.epsilon_rel)
    else:
        geo = classify_boundary(mesh)
    trace = integrate(mesh, geo, IntegratorConfig(t_end=args.t_end), _energy(args))
    validate(mesh)
    after = mesh_stats(mesh, _energy(args))
    labelled = [("initial", before), ("final", after)]
    _emit_stats(_stats_rows(labelled), args.stats_out)
    if args.out:
        _write_mesh(mesh, args.out)
    if args.report:
        io.write_json({"initial": before.to_dict(), "final": after.to_dict(),
                       "accepted": trace.accepted, "rejected": trace.rejected,
                       "stop_reason": trace.stop_reason,
                       "trace": trace.rows(), "seed": args.seed}, args.report)
    _figures(args, labelled, trace=trace)
    return EXIT_OK


def _cmd_flip(args):
    mesh = _read(args.input)
    before = mesh_stats(mesh)
    crit = FlipCriterion(args.criterion)
    st = lazy_pass(mesh, crit, args.flip_level)
    mesh.compact()
    validate(mesh)
    after = mesh_stats(mesh)
    labelled = [("initial", before), ("final", after)]
    _emit_stats(_stats_rows(labelled), args.stats_out)
    if args.out:
        _write_mesh(mesh, args.out)
    if args.report:
        io.write_json({"initial": before.to_dict(), "final": after.to_dict(),
                       "removals": st.removals, "sweeps": st.sweeps, "seed": args.seed}, args.report)
    _figures(args, labelled)
    return EXIT_OK


def _cmd_stats(args):
    mesh = _read(args.input)
    s = mesh_stats(mesh)
    _emit_stats(_stats_rows([("mesh", s)]), args.stats_out)
    if args.report:
        io.write_json(s.to_dict(), args.report)
    _figures(args, [("mesh", s)])
    return EXIT_OK


def _cmd_generate(args):
    if not args.out:
        raise _UsageError("tetopt generate: error: --out is required")
    if args.kind == "rand":
        mesh = generate.rand_cube(seed=args.seed, **({"n_interior": args.size} if args.size else {}))
    elif args.kind == "cube":
        mesh = generate.structured_cube(args.size or 5, args.perturb, args.seed)
    elif args.kind == "lshape":
        mesh = generate.l_shape(args.size or 4, args.perturb, args.seed)
    else:
        mesh = generate.ellipsoid(seed=args.seed, **({"n_interior": args.size} if args.size else {}))
    _write_mesh(mesh, args.out)
    s = mesh_stats(mesh)
    _emit_stats(_stats_rows([("mesh", s)]), args.stats_out)
    return EXIT_OK


_COMMANDS = {
    "improve": _cmd_improve,
    "smooth": _cmd_smooth,
    "flip": _cmd_flip,
    "stats": _cmd_stats,
    "generate": _cmd_generate,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except _InputError as exc:
        print(f"tetopt: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvalidInput, ValueError) as exc:
        print(f"tetopt: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MeshError, OSError) as exc:
        print(f"tetopt: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
