"""Tetrahedral outer-shell TSDF toolkit."""

from . import threads  # noqa: F401  (must precede numba imports)
from .mesh import TriMesh, compute_vertex_normals
from .mesh_io import load_mesh, save_mesh
from .closest import ClosestPointIndex, closest_surface_point

__version__ = "0.1.0"

__all__ = ["TriMesh", "compute_vertex_normals", "load_mesh", "save_mesh", "ClosestPointIndex",
           "closest_surface_point"]
