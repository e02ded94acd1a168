"""Mesh and report I/O: TetGen node/ele/face, legacy VTK, OFF, CSV and JSON."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CountMismatch, MeshIndexError, ParseError
from .mesh import build_mesh
from .quality import aspect_ratio_array, dihedral_angles_array

VTK_TETRA = 10


@dataclass
class MeshFileSet:
    node: Path
    ele: Path
    face: Path | None = None

    @classmethod
    def from_base(cls, base):
        """``base.node``, ``base.ele`` and ``base.face`` if it exists."""
        base = Path(base)
        if base.suffix in (".node", ".ele", ".face"):
            base = base.with_suffix("")
        face = base.with_suffix(".face")
        return cls(base.with_suffix(".node"), base.with_suffix(".ele"), face if face.exists() else None)


def _records(path):
    """Yield ``(line_number, tokens)`` for non-empty, non-comment lines."""
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if line:
                yield no, line.split()


def _int(tok, path, line, col):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"expected an integer, got {tok!r}", path, line, col) from None


def _float(tok, path, line, col):
    try:
        x = float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}", path, line, col) from None
    if not math.isfinite(x):
        raise ParseError(f"non-finite coordinate {tok!r}", path, line, col)
    return x


def _header(it, path, n_min):
    try:
        no, tok = next(it)
    except StopIteration:
        raise ParseError("missing header", path) from None
    if len(tok) < n_min:
        raise ParseError(f"header needs at least {n_min} fields", path, no)
    return no, [_int(t, path, no, k + 1) for k, t in enumerate(tok)]


def read_node(path):
    """Coordinates, point attributes, boundary markers and the index base."""
    path = Path(path)
    it = _records(path)
    hno, head = _header(it, path, 2)
    count, dims = head[0], head[1]
    n_attr = head[2] if len(head) > 2 else 0
    n_mark = head[3] if len(head) > 3 else 0
    if dims != 3:
        raise ParseError(f"only 3D node files are supported, got dimension {dims}", path, hno, 2)
    width = 1 + 3 + n_attr + n_mark
    pts = np.empty((count, 3))
    attrs = np.empty((count, n_attr))
    marks = np.zeros(count, dtype=np.int64)
    base = None
    k = -1
    for k, (no, tok) in enumerate(it):
        if k >= count:
            raise CountMismatch(f"header declares {count} nodes but more records follow", path, no)
        if len(tok) < width:
            raise ParseError(f"expected {width} fields, got {len(tok)}", path, no)
        idx = _int(tok[0], path, no, 1)
        if base is None:
            base = idx
            if base not in (0, 1):
                raise ParseError(f"first node index must be 0 or 1, got {idx}", path, no, 1)
        if idx != base + k:
            raise ParseError(f"node index {idx} out of sequence (expected {base + k})", path, no, 1)
        pts[k] = [_float(tok[c], path, no, c + 1) for c in (1, 2, 3)]
        for a in range(n_attr):
            attrs[k, a] = _float(tok[4 + a], path, no, 5 + a)
        if n_mark:
            marks[k] = _int(tok[4 + n_attr], path, no, 5 + n_attr)
    if k + 1 != count:
        raise CountMismatch(f"header declares {count} nodes, found {k + 1}", path, hno)
    return pts, attrs, (marks if n_mark else None), (0 if base is None else base)


def read_ele(path, base, n_nodes):
    path = Path(path)
    it = _records(path)
    hno, head = _header(it, path, 2)
    count, per = head[0], head[1]
    n_attr = head[2] if len(head) > 2 else 0
    if per not in (4, 10):
        raise ParseError(f"unsupported nodes per tetrahedron: {per}", path, hno, 2)
    cells = np.empty((count, 4), dtype=np.int64)
    attrs = np.empty((count, n_attr))
    k = -1
    for k, (no, tok) in enumerate(it):
        if k >= count:
            raise CountMismatch(f"header declares {count} elements but more records follow", path, no)
        if len(tok) < 1 + per + n_attr:
            raise ParseError(f"expected {1 + per + n_attr} fields, got {len(tok)}", path, no)
        for c in range(4):
            v = _int(tok[1 + c], path, no, 2 + c) - base
            if not 0 <= v < n_nodes:
                raise MeshIndexError(f"vertex {v + base} out of range ({n_nodes} nodes)", path, no, 2 + c)
            cells[k, c] = v
        for a in range(n_attr):
            attrs[k, a] = _float(tok[1 + per + a], path, no, 2 + per + a)
    if k + 1 != count:
        raise CountMismatch(f"header declares {count} elements, found {k + 1}", path, hno)
    return cells, attrs


def read_face(path, base, n_nodes):
    path = Path(path)
    it = _records(path)
    hno, head = _header(it, path, 1)
    count = head[0]
    n_mark = head[1] if len(head) > 1 else 0
    faces = np.empty((count, 3), dtype=np.int64)
    marks = np.zeros(count, dtype=np.int64)
    k = -1
    for k, (no, tok) in enumerate(it):
        if k >= count:
            raise CountMismatch(f"header declares {count} faces but more records follow", path, no)
        if len(tok) < 4 + n_mark:
            raise ParseError(f"expected {4 + n_mark} fields, got {len(tok)}", path, no)
        for c in range(3):
            v = _int(tok[1 + c], path, no, 2 + c) - base
            if not 0 <= v < n_nodes:
                raise MeshIndexError(f"vertex {v + base} out of range ({n_nodes} nodes)", path, no, 2 + c)
            faces[k, c] = v
        if n_mark:
            marks[k] = _int(tok[4], path, no, 5)
    if k + 1 != count:
        raise CountMismatch(f"header declares {count} faces, found {k + 1}", path, hno)
    return faces, marks


def read_tetgen(files):
    """Read a TetGen mesh from a :class:`MeshFileSet` or a base path.

    Node attributes and boundary markers are kept in ``mesh.point_data``
    and faces from a ``.face`` file in ``mesh.face_data``.
    """
    if not isinstance(files, MeshFileSet):
        files = MeshFileSet.from_base(files)
    pts, attrs, marks, base = read_node(files.node)
    cells, _ = read_ele(files.ele, base, len(pts))
    mesh = build_mesh(pts, cells)
    mesh.point_data = {}
    if attrs.shape[1]:
        mesh.point_data["attributes"] = attrs
    if marks is not None:
        mesh.point_data["marker"] = marks
    mesh.face_data = {}
    if files.face is not None:
        faces, fmarks = read_face(files.face, base, len(pts))
        mesh.face_data = {"faces": faces, "marker": fmarks}
    mesh.index_base = base
    return mesh


def _fmt(x):
    return format(float(x), ".17g")


def write_tetgen(mesh, base, one_based=False, faces=True):
    """Write ``base.node``, ``base.ele`` and (optionally) ``base.face``."""
    base = Path(base)
    off = 1 if one_based else 0
    arr, _ = mesh.tet_array()
    P = mesh.points
    marks = getattr(mesh, "point_data", {}).get("marker")
    if marks is not None and len(marks) != len(P):
        marks = None
    with open(base.with_suffix(".node"), "w", encoding="utf-8") as fh:
        fh.write(f"{len(P)} 3 0 {1 if marks is not None else 0}\n")
        for i, p in enumerate(P):
            row = f"{i + off} {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}"
            if marks is not None:
                row += f" {int(marks[i])}"
            fh.write(row + "\n")
    with open(base.with_suffix(".ele"), "w", encoding="utf-8") as fh:
        fh.write(f"{len(arr)} 4 0\n")
        for k, c in enumerate(arr):
            fh.write(f"{k + off} {c[0] + off} {c[1] + off} {c[2] + off} {c[3] + off}\n")
    if faces:
        tris = mesh.boundary_triangles()
        with open(base.with_suffix(".face"), "w", encoding="utf-8") as fh:
            fh.write(f"{len(tris)} 0\n")
            for k, f in enumerate(tris):
                fh.write(f"{k + off} {f[0] + off} {f[1] + off} {f[2] + off}\n")


def write_vtk(mesh, path, cell_data=True, title="tetrahedral mesh"):
    """Legacy ASCII unstructured grid; optional per-cell min dihedral and aspect ratio."""
    arr, _ = mesh.tet_array()
    P = mesh.points
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(P)} double"]
    lines += [f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}" for p in P]
    lines.append(f"CELLS {len(arr)} {5 * len(arr)}")
    lines += [f"4 {c[0]} {c[1]} {c[2]} {c[3]}" for c in arr]
    lines.append(f"CELL_TYPES {len(arr)}")
    lines += [str(VTK_TETRA)] * len(arr)
    if cell_data and len(arr):
        mins = dihedral_angles_array(P, arr).min(axis=1)
        ar = aspect_ratio_array(P, arr)
        lines.append(f"CELL_DATA {len(arr)}")
        for name, vals in (("min_dihedral", mins), ("aspect_ratio", ar)):
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in vals]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_off(mesh, path):
    """Boundary surface as an OFF file (only the vertices it uses)."""
    tris = mesh.boundary_triangles()
    used = np.unique(tris) if len(tris) else np.zeros(0, dtype=np.int64)
    remap = {int(v): k for k, v in enumerate(used)}
    P = mesh.points
    lines = ["OFF", f"{len(used)} {len(tris)} 0"]
    lines += [f"{_fmt(P[v][0])} {_fmt(P[v][1])} {_fmt(P[v][2])}" for v in used]
    lines += [f"3 {remap[int(a)]} {remap[int(b)]} {remap[int(c)]}" for a, b, c in tris]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _bin_label(prefix, lo, hi):
    hi = "inf" if not np.isfinite(hi) else f"{hi:g}"
    return f"{prefix}_{lo:g}_{hi}"


def stats_header(stats):
    head = ["iter", "n_verts", "n_tets", "theta_min", "theta_max", "mean", "stddev", "energy"]
    b = stats.angle_bins
    head += [_bin_label("angle", b[i], b[i + 1]) for i in range(len(b) - 1)]
    return head


def stats_row(k, s):
    return [k, s.n_verts, s.n_tets, _fmt(s.theta_min), _fmt(s.theta_max), _fmt(s.mean),
            _fmt(s.stddev), _fmt(s.energy)] + [int(c) for c in s.angle_counts]


def write_stats(stats, path):
    """One CSV row per :class:`QualityStats` record, plus angle histogram columns."""
    stats = list(stats)
    if not stats:
        raise ValueError("need at least one stats record")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(stats_header(stats[0]))
        for k, s in enumerate(stats):
            w.writerow(stats_row(k, s))


def write_rows(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(rows)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def write_json(obj, path):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2) + "\n", encoding="utf-8")
