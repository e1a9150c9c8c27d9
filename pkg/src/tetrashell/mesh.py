"""Indexed triangle meshes and per-vertex normals."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle surface.

    ``vertices`` is (V, 3) float64 in meters, ``faces`` is (F, 3) int64,
    ``vertex_normals`` is (V, 3) or None until computed. Instances are
    treated as immutable; every operation returns a new mesh.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise ValueError("face index out of range")
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ValueError("degenerate face: repeated vertex index")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.vertex_normals is not None:
            n = np.ascontiguousarray(self.vertex_normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(v):
                raise ValueError("vertex_normals length does not match vertices")
            object.__setattr__(self, "vertex_normals", n)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_normals(self) -> "TriMesh":
        """Return a copy with area-weighted vertex normals, discarding warnings."""
        return compute_vertex_normals(self)[0]

    def face_normals(self) -> np.ndarray:
        """Unnormalized face normals (length = 2 * area), CCW winding."""
        tri = self.vertices[self.faces]
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(), axis=1)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (E, 2) index pairs."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def boundary_edges(self) -> np.ndarray:
        """Undirected edges used by exactly one face."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq[counts == 1]

    def transformed(self, vertices: np.ndarray) -> "TriMesh":
        """Same topology with new vertex positions; normals are recomputed if present."""
        out = replace(self, vertices=vertices, vertex_normals=None)
        if self.vertex_normals is not None:
            out = out.with_normals()
        return out


def compute_vertex_normals(mesh: TriMesh, area_eps: float = 1e-20) -> tuple[TriMesh, list[str]]:
    """Area-weighted vertex normals.

    Returns the mesh with normals set and a list of warnings. Zero-area
    faces are skipped; vertices without a usable incident face get a zero
    normal and a warning entry.
    """
    if mesh.n_faces == 0:
        raise ValueError("mesh has no faces")
    issues: list[str] = []
    fn = mesh.face_normals()
    # |cross| is twice the area, so summing cross products weights by area
    area2 = np.linalg.norm(fn, axis=1)
    bad = area2 <= area_eps
    if np.any(bad):
        issues.append(f"skipped {int(bad.sum())} zero-area face(s): {np.flatnonzero(bad)[:10].tolist()}")
        fn = fn.copy()
        fn[bad] = 0.0
    acc = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], fn)
    length = np.linalg.norm(acc, axis=1)
    isolated = length <= 0.0
    normals = np.zeros_like(acc)
    normals[~isolated] = acc[~isolated] / length[~isolated, None]
    if np.any(isolated):
        ids = np.flatnonzero(isolated)
        issues.append(f"{len(ids)} vertex(es) without incident faces got zero normals: {ids[:10].tolist()}")
    return replace(mesh, vertex_normals=normals), issues


def merge_vertices(mesh: TriMesh, decimals: int = 12) -> TriMesh:
    """Weld vertices with identical (rounded) coordinates and drop collapsed faces."""
    key = np.round(mesh.vertices, decimals)
    uniq, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(first, kind="stable")
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    faces = remap[inverse[mesh.faces]]
    ok = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    return TriMesh(mesh.vertices[first[order]], faces[ok])


def remove_unreferenced(mesh: TriMesh) -> TriMesh:
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.faces.reshape(-1)] = True
    remap = np.cumsum(used) - 1
    normals = None if mesh.vertex_normals is None else mesh.vertex_normals[used]
    return TriMesh(mesh.vertices[used], remap[mesh.faces], normals)
