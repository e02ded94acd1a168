"""Tetrahedral mesh improvement by moving-mesh smoothing and lazy searching flips."""

from .boundary import BoundaryKind, GeometryModel, classify_boundary
from .errors import MeshError
from .flips import FlipCriterion, FlipSearch, flip23, flip32, flipnm, flipnm_post, lazy_pass
from .io import read_tetgen, write_tetgen, write_vtk
from .mesh import TetMesh, build_mesh, edge_star, validate
from .quality import EnergyParams, energy, mesh_min_angle, mesh_stats
from .scheme import ImproveConfig, ImproveReport, improve
from .smoothing import IntegratorConfig, integrate

__version__ = "0.1.0"

__all__ = [
    "BoundaryKind", "GeometryModel", "classify_boundary", "MeshError", "FlipCriterion",
    "FlipSearch", "flip23", "flip32", "flipnm", "flipnm_post", "lazy_pass", "read_tetgen",
    "write_tetgen", "write_vtk", "TetMesh", "build_mesh", "edge_star", "validate",
    "EnergyParams", "energy", "mesh_min_angle", "mesh_stats", "ImproveConfig",
    "ImproveReport", "improve", "IntegratorConfig", "integrate",
]
