"""Outer-shell surface operations: inflation, clustering decimation, midpoint subdivision."""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh, remove_unreferenced

DEFAULT_OFFSET = 0.04


def inflate_mesh(mesh: TriMesh, offset: float = DEFAULT_OFFSET) -> TriMesh:
    """Push every vertex ``offset`` meters along its vertex normal."""
    if not offset > 0:
        raise ValueError(f"inflation offset must be > 0, got {offset}")
    if mesh.vertex_normals is None:
        mesh = mesh.with_normals()
    return TriMesh(mesh.vertices + offset * mesh.vertex_normals, mesh.faces).with_normals()


def _cluster(mesh: TriMesh, cell: float, origin: np.ndarray):
    key = np.floor((mesh.vertices - origin) / cell).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    return first, inverse.reshape(-1)


def _cancel_opposite_pairs(faces: np.ndarray) -> np.ndarray:
    """Drop pairs of faces that share a vertex set with opposite winding (zero-volume fins)."""
    if len(faces) == 0:
        return faces
    rot = np.argmin(faces, axis=1)
    fwd = np.stack([np.roll(f, -r) for f, r in zip(faces, rot)])
    rev = fwd[:, [0, 2, 1]]
    keep = np.ones(len(faces), dtype=bool)
    index = {}
    for i, t in enumerate(map(tuple, fwd)):
        index.setdefault(t, []).append(i)
    for i, t in enumerate(map(tuple, rev)):
        if not keep[i]:
            continue
        partners = [j for j in index.get(t, []) if keep[j] and j != i]
        if partners:
            keep[i] = False
            keep[partners[0]] = False
    return faces[keep]


def _pick_cell(mesh: TriMesh, target: int):
    lo_v, hi_v = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    extent = float(np.max(hi_v - lo_v))
    origin = lo_v - 1e-9 * extent
    lo, hi = extent * 1e-6, extent
    best = None
    for _ in range(60):
        cell = np.sqrt(lo * hi)
        n = len(_cluster(mesh, cell, origin)[0])
        if best is None or abs(n - target) < abs(best[1] - target):
            best = (cell, n)
        if abs(n - target) <= 0.02 * target:
            break
        if n > target:
            lo = cell
        else:
            hi = cell
    return best[0], origin


def decimation_cell_size(mesh: TriMesh, target_vertex_count: int) -> float:
    """Cell size :func:`decimate` settles on (bounds the surface deviation)."""
    return _pick_cell(mesh, int(target_vertex_count))[0]


def decimate(mesh: TriMesh, target_vertex_count: int) -> TriMesh:
    """Vertex-clustering decimation on a uniform lattice.

    The cell size is bisected until the number of occupied cells is within
    2% of the target (or as close as the lattice allows). Each cluster
    collapses to the mean of its vertices; collapsed faces are dropped,
    which keeps every edge's face-count parity, so closed inputs stay closed.
    """
    target = int(target_vertex_count)
    if target >= mesh.n_vertices:
        raise ValueError(f"target {target} must be below the current vertex count {mesh.n_vertices}")
    if target < 4:
        raise ValueError("target vertex count must be at least 4")
    cell, origin = _pick_cell(mesh, target)
    first, inverse = _cluster(mesh, cell, origin)
    n_clusters = len(first)
    sums = np.zeros((n_clusters, 3))
    np.add.at(sums, inverse, mesh.vertices)
    counts = np.bincount(inverse, minlength=n_clusters)
    verts = sums / counts[:, None]
    faces = inverse[mesh.faces]
    ok = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    faces = _cancel_opposite_pairs(faces[ok])
    out = remove_unreferenced(TriMesh(verts, faces))
    return out.with_normals() if len(out.faces) else out


def subdivide_midpoint(mesh: TriMesh, iterations: int = 1) -> TriMesh:
    """Split every triangle 1 -> 4 at shared edge midpoints, ``iterations`` times."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    v, f = mesh.vertices, mesh.faces
    if iterations == 0:
        return mesh
    for _ in range(iterations):
        corner_edges = np.stack([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=1)  # (F, 3, 2)
        keys = np.sort(corner_edges.reshape(-1, 2), axis=1)
        edges, inv = np.unique(keys, axis=0, return_inverse=True)
        mids = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
        m = inv.reshape(-1, 3) + len(v)  # mid of (a,b), (b,c), (c,a)
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        ab, bc, ca = m[:, 0], m[:, 1], m[:, 2]
        f = np.concatenate([
            np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
            np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1),
        ])
        v = np.concatenate([v, mids])
    out = TriMesh(v, f)
    return out.with_normals() if mesh.vertex_normals is not None else out


def build_shell(template: TriMesh, offset: float = DEFAULT_OFFSET, decimate_to: int | None = None,
                subdivisions: int = 0) -> TriMesh:
    """Inflate, optionally decimate, then subdivide: the coarse outer-shell pipeline."""
    shell = inflate_mesh(template, offset)
    if decimate_to is not None and decimate_to < shell.n_vertices:
        shell = decimate(shell, decimate_to)
    shell = subdivide_midpoint(shell, subdivisions)
    return shell.with_normals()
