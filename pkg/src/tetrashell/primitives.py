"""Procedural meshes used as fixtures and synthetic templates."""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Geodesic sphere: icosahedron refined by midpoint splits projected to the sphere."""
    from .shell import subdivide_midpoint

    t = (1.0 + 5.0 ** 0.5) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    mesh = TriMesh(v / np.linalg.norm(v, axis=1, keepdims=True), f)
    for _ in range(subdivisions):
        mesh = subdivide_midpoint(mesh, 1)
        mesh = TriMesh(mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True), mesh.faces)
    return TriMesh(mesh.vertices * radius + np.asarray(center, dtype=np.float64), mesh.faces)


def sphere_with_edge(radius: float, max_edge: float) -> TriMesh:
    """Smallest icosphere whose longest edge is at most ``max_edge``."""
    for level in range(12):
        m = icosphere(level, radius)
        e = m.edges()
        if np.linalg.norm(m.vertices[e[:, 0]] - m.vertices[e[:, 1]], axis=1).max() <= max_edge:
            return m
    raise ValueError("edge length target too small")


def box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Axis-aligned box, 8 vertices and 12 outward-oriented triangles."""
    h = np.asarray(size, dtype=np.float64) / 2.0
    v = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=np.float64) * h
    f = np.array([
        [0, 1, 3], [0, 3, 2],  # -x
        [4, 6, 7], [4, 7, 5],  # +x
        [0, 4, 5], [0, 5, 1],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [0, 2, 6], [0, 6, 4],  # -z
        [1, 5, 7], [1, 7, 3],  # +z
    ])
    return TriMesh(v + np.asarray(center, dtype=np.float64), f)


def grid_plane(size: float = 1.0, n: int = 1, z: float = 0.0, origin=None) -> TriMesh:
    """Square in the plane z = const split into n x n quads, CCW (normal +z)."""
    lo = np.array([-size / 2, -size / 2]) if origin is None else np.asarray(origin, dtype=np.float64)
    s = np.linspace(0.0, size, n + 1)
    xx, yy = np.meshgrid(lo[0] + s, lo[1] + s, indexing="ij")
    v = np.stack([xx.ravel(), yy.ravel(), np.full(xx.size, z)], axis=1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    f = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return TriMesh(v, f)


def cylinder(radius: float, z0: float, z1: float, segments: int = 32, rings: int = 16) -> TriMesh:
    """Closed cylinder along z with fan caps."""
    theta = 2 * np.pi * np.arange(segments) / segments
    zs = np.linspace(z0, z1, rings + 1)
    ring = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    v = [np.column_stack([ring, np.full(segments, z)]) for z in zs]
    v = np.concatenate(v + [np.array([[0, 0, z0], [0, 0, z1]])])
    faces = []
    for r in range(rings):
        for s in range(segments):
            a = r * segments + s
            b = r * segments + (s + 1) % segments
            c, d = a + segments, b + segments
            faces += [[a, b, d], [a, d, c]]
    bottom, top = len(v) - 2, len(v) - 1
    last = rings * segments
    for s in range(segments):
        faces.append([bottom, (s + 1) % segments, s])
        faces.append([top, last + s, last + (s + 1) % segments])
    return TriMesh(v, np.array(faces))


def regular_tetrahedron(edge: float = 1.0) -> TriMesh:
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64)
    v *= edge / (2 * np.sqrt(2))
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriMesh(v, f)


def ellipsoid(axes, subdivisions: int = 4, center=(0.0, 0.0, 0.0)) -> TriMesh:
    s = icosphere(subdivisions, 1.0)
    return TriMesh(s.vertices * np.asarray(axes, dtype=np.float64) + np.asarray(center, dtype=np.float64), s.faces)


# --- articulated mannequin -------------------------------------------------

# Star-pose skeleton (meters, y up, z toward the viewer). Joint order is the
# bone order: bone b drives the segment from JOINTS[PARENTS[b]] to JOINTS[b].
MANNEQUIN_JOINTS = np.array([
    [0.00, 1.00, 0.00],    # 0 pelvis (root)
    [0.00, 1.45, 0.00],    # 1 chest
    [0.00, 1.62, 0.00],    # 2 neck
    [0.00, 1.76, 0.00],    # 3 head
    [-0.20, 1.45, 0.00],   # 4 left shoulder
    [-0.47, 1.58, 0.00],   # 5 left elbow
    [-0.74, 1.71, 0.00],   # 6 left wrist
    [0.20, 1.45, 0.00],    # 7 right shoulder
    [0.47, 1.58, 0.00],    # 8 right elbow
    [0.74, 1.71, 0.00],    # 9 right wrist
    [-0.10, 0.95, 0.00],   # 10 left hip
    [-0.22, 0.52, 0.00],   # 11 left knee
    [-0.32, 0.10, 0.00],   # 12 left ankle
    [0.10, 0.95, 0.00],    # 13 right hip
    [0.22, 0.52, 0.00],    # 14 right knee
    [0.32, 0.10, 0.00],    # 15 right ankle
])
MANNEQUIN_PARENTS = np.array([-1, 0, 1, 2, 1, 4, 5, 1, 7, 8, 0, 10, 11, 0, 13, 14])
MANNEQUIN_BONES = ["pelvis", "spine", "neck", "head", "l_clavicle", "l_upperarm", "l_forearm",
                   "r_clavicle", "r_upperarm", "r_forearm", "l_hip", "l_thigh", "l_shin",
                   "r_hip", "r_thigh", "r_shin"]

# (joint a, joint b, radius a, radius b) capsule-cones making up the body
_MANNEQUIN_LIMBS = [
    (0, 1, 0.13, 0.14), (1, 2, 0.12, 0.06), (4, 7, 0.07, 0.07),
    (4, 5, 0.055, 0.045), (5, 6, 0.045, 0.035), (7, 8, 0.055, 0.045), (8, 9, 0.045, 0.035),
    (10, 11, 0.08, 0.06), (11, 12, 0.06, 0.045), (13, 14, 0.08, 0.06), (14, 15, 0.06, 0.045),
    (10, 13, 0.09, 0.09),
]


def _segment_distance(p, a, b):
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1), t


def mannequin_sdf(points, depth_scale: float = 0.75) -> np.ndarray:
    """Approximate signed distance of a smooth capsule mannequin (negative inside).

    The torso is flattened front-to-back by ``depth_scale``; limbs are
    round. Pieces are merged with a polynomial smooth-minimum so concave
    creases stay rounded.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    j = MANNEQUIN_JOINTS
    d = np.full(len(p), np.inf)
    k = 0.04
    pieces = []
    for a, b, ra, rb in _MANNEQUIN_LIMBS:
        q = p
        if (a, b) in ((0, 1), (10, 13)):
            q = p * np.array([1.0, 1.0, 1.0 / depth_scale])
        dist, t = _segment_distance(q, j[a], j[b])
        pieces.append(dist - (ra + (rb - ra) * t))
    head = np.linalg.norm(p - (j[3] + [0, 0.02, 0]), axis=1) - 0.10
    pieces.append(head)
    for piece in pieces:
        if np.all(np.isinf(d)):
            d = piece
            continue
        h = np.clip(0.5 + 0.5 * (piece - d) / k, 0.0, 1.0)
        d = piece * (1 - h) + d * h - k * h * (1 - h)
    return d


def mannequin_skin_weights(points, sharpness: float = 60.0, cutoff: float = 1e-4) -> np.ndarray:
    """Per-point weights over MANNEQUIN_BONES from distance to bone segments.

    Weights decay as exp(-sharpness * (d - d_min)); entries below ``cutoff``
    are dropped before renormalizing so most points are driven by one bone.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    j = MANNEQUIN_JOINTS
    nb = len(MANNEQUIN_PARENTS)
    dist = np.empty((len(p), nb))
    for b in range(nb):
        parent = MANNEQUIN_PARENTS[b]
        a = j[parent] if parent >= 0 else j[b] - [0, 0.05, 0]
        dist[:, b], _ = _segment_distance(p, a, j[b])
    w = np.exp(-sharpness * (dist - dist.min(axis=1, keepdims=True)))
    w[w < cutoff] = 0.0
    return w / w.sum(axis=1, keepdims=True)


def mannequin_mesh(resolution: float = 0.015, depth_scale: float = 0.75) -> TriMesh:
    """Zero level set of :func:`mannequin_sdf`, triangulated by marching tetrahedra."""
    from .grid import TetraGrid, bcc_lattice, lattice_spacing
    from .marching import extract_isosurface
    from .tsdf import TsdfField

    j = MANNEQUIN_JOINTS
    pad = 0.2
    lo = j.min(axis=0) - pad
    hi = j.max(axis=0) + pad
    nodes, tets = bcc_lattice(lo, hi, lattice_spacing(resolution))
    sdf = mannequin_sdf(nodes, depth_scale)
    near = np.abs(sdf[tets]).min(axis=1) < 2 * resolution
    tets = tets[near]
    used = np.unique(tets)
    remap = np.full(len(nodes), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    grid = TetraGrid(nodes[used], remap[tets], np.zeros(len(used), dtype=np.int64), resolution)
    return extract_isosurface(TsdfField(grid, sdf[used], 1.0))


def mannequin_template(resolution: float = 0.015):
    """Star-pose mannequin surface with skin weights and identity bone transforms."""
    from .skinning import SkinnedTemplate

    mesh = mannequin_mesh(resolution)
    return SkinnedTemplate(mesh.vertices, mannequin_skin_weights(mesh.vertices), MANNEQUIN_JOINTS,
                           MANNEQUIN_PARENTS, bone_names=list(MANNEQUIN_BONES), faces=mesh.faces)
