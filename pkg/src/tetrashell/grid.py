"""Tetrahedral grids filling an outer shell, part labels, and summit hierarchies."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import threads as _threads  # noqa: F401
from .closest import ClosestPointIndex, ray_parity_inside
from .mesh import TriMesh

log = logging.getLogger(__name__)

# Mean length of the unique edges of the infinite BCC tetrahedralization with
# cube edge a: 6 edges of length a and 8 of length a*sqrt(3)/2 per cell.
BCC_MEAN_EDGE = (6.0 + 4.0 * np.sqrt(3.0)) / 14.0


@dataclass(frozen=True)
class TetraGrid:
    summits: np.ndarray      # (S, 3) float64 holding float32-exact values, canonical pose
    tetrahedra: np.ndarray   # (T, 4) int64, positive signed volume
    part_labels: np.ndarray  # (S,) int64
    resolution: float

    def __post_init__(self):
        # snap to float32 so a grid read back from disk is bitwise identical to the one written
        s = np.ascontiguousarray(self.summits, dtype=np.float32).astype(np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.tetrahedra, dtype=np.int64).reshape(-1, 4)
        lab = np.zeros(len(s), np.int64) if self.part_labels is None else \
            np.ascontiguousarray(self.part_labels, dtype=np.int64).reshape(-1)
        if len(lab) != len(s):
            raise ValueError("part_labels length does not match summit count")
        if t.size and (t.min() < 0 or t.max() >= len(s)):
            raise ValueError("tetrahedron index out of range")
        object.__setattr__(self, "summits", s)
        object.__setattr__(self, "tetrahedra", t)
        object.__setattr__(self, "part_labels", lab)
        object.__setattr__(self, "resolution", float(self.resolution))

    @property
    def n_summits(self) -> int:
        return len(self.summits)

    @property
    def n_tetrahedra(self) -> int:
        return len(self.tetrahedra)

    def signed_volumes(self) -> np.ndarray:
        return tet_signed_volumes(self.summits, self.tetrahedra)

    def edges(self) -> np.ndarray:
        t = self.tetrahedra
        pairs = np.concatenate([t[:, [i, j]] for i in range(4) for j in range(i + 1, 4)])
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0)

    def mean_edge_length(self) -> float:
        e = self.edges()
        return float(np.linalg.norm(self.summits[e[:, 0]] - self.summits[e[:, 1]], axis=1).mean())

    def with_labels(self, labels) -> "TetraGrid":
        return TetraGrid(self.summits, self.tetrahedra, labels, self.resolution)


def tet_signed_volumes(points: np.ndarray, tets: np.ndarray) -> np.ndarray:
    p = points[tets]
    return np.einsum("ij,ij->i", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), p[:, 3] - p[:, 0]) / 6.0


def bcc_nodes(lo, hi, spacing: float):
    """BCC nodes covering [lo, hi]: corner nodes first (x-major), then cell centers."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    a = float(spacing)
    nx, ny, nz = (int(v) for v in np.maximum(np.ceil((hi - lo) / a).astype(np.int64), 1))
    gi, gj, gk = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1), indexing="ij")
    corners = lo + a * np.stack([gi.ravel(), gj.ravel(), gk.ravel()], axis=1)
    hi_, hj, hk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    centers = lo + a * (np.stack([hi_.ravel(), hj.ravel(), hk.ravel()], axis=1) + 0.5)
    return np.concatenate([corners, centers]), (nx, ny, nz)


def bcc_tetrahedra(dims, keep=None):
    """Standard BCC decomposition (12 tets per cell) for the node layout of :func:`bcc_nodes`.

    Each tetrahedron joins two face-adjacent cell centers with one edge of
    their shared face. With a boolean node mask ``keep``, only tetrahedra
    touching a kept node are returned. Orientation is positive.
    """
    nx, ny, nz = dims
    cx, cy, cz = nx + 1, ny + 1, nz + 1
    n_corner = cx * cy * cz
    hi_, hj, hk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    cells = np.stack([hi_.ravel(), hj.ravel(), hk.ravel()], axis=1)
    lim = np.array([nx, ny, nz])
    out = []
    for axis in range(3):
        sel = cells[cells[:, axis] < lim[axis] - 1]
        if len(sel) == 0:
            continue
        step = np.zeros(3, np.int64)
        step[axis] = 1
        nb = sel + step
        c1 = n_corner + (sel[:, 0] * ny + sel[:, 1]) * nz + sel[:, 2]
        c2 = n_corner + (nb[:, 0] * ny + nb[:, 1]) * nz + nb[:, 2]
        u, w = [d for d in range(3) if d != axis]
        ring = []
        for du, dw in ((0, 0), (1, 0), (1, 1), (0, 1)):
            b = nb.copy()
            b[:, u] += du
            b[:, w] += dw
            ring.append((b[:, 0] * cy + b[:, 1]) * cz + b[:, 2])
        for m in range(4):
            t = np.stack([c1, c2, ring[m], ring[(m + 1) % 4]], axis=1)
            if keep is not None:
                t = t[keep[t].any(axis=1)]
            # orientation is translation invariant, so one sign fixes the whole batch
            if _pattern_is_negative(axis, m):
                t = t[:, [1, 0, 2, 3]]
            out.append(t)
    return np.concatenate(out) if out else np.zeros((0, 4), np.int64)


def _pattern_is_negative(axis: int, m: int) -> bool:
    # reference pair: cell centers (0.5, 0.5, 0.5) and its neighbour along ``axis``
    c1 = np.full(3, 0.5)
    c2 = c1.copy()
    c2[axis] += 1.0
    u, w = [d for d in range(3) if d != axis]
    ring = []
    for du, dw in ((0, 0), (1, 0), (1, 1), (0, 1)):
        p = np.zeros(3)
        p[axis] = 1.0
        p[u] += du
        p[w] += dw
        ring.append(p)
    p0, p1, p2, p3 = c1, c2, ring[m], ring[(m + 1) % 4]
    return float(np.dot(np.cross(p1 - p0, p2 - p0), p3 - p0)) < 0.0


def bcc_lattice(lo, hi, spacing: float):
    """All BCC nodes and tetrahedra covering the box [lo, hi]."""
    nodes, dims = bcc_nodes(lo, hi, spacing)
    return nodes, bcc_tetrahedra(dims)


def lattice_spacing(resolution: float) -> float:
    """BCC cube edge whose mean tetra edge length equals ``resolution``."""
    return resolution / BCC_MEAN_EDGE


def tetrahedralize(shell: TriMesh, resolution: float, parity_samples: int = 512,
                   parity_tolerance: float = 0.01) -> TetraGrid:
    """Fill a closed, outward-oriented shell with a BCC tetrahedral grid.

    A tetrahedron is kept when at least one of its summits is inside the
    shell. Inside means the closest-point sign test is negative; a strided
    subset of lattice nodes is re-tested by ray parity and more than
    ``parity_tolerance`` disagreement is reported as an open shell.
    """
    if not resolution > 0:
        raise ValueError("resolution must be > 0")
    if shell.n_faces == 0:
        raise ValueError("empty shell")
    lo, hi = shell.vertices.min(axis=0), shell.vertices.max(axis=0)
    if resolution >= float(np.max(hi - lo)):
        raise ValueError(f"resolution {resolution} is not smaller than the shell extent {np.max(hi - lo):.4g}")
    a = lattice_spacing(resolution)
    nodes, dims = bcc_nodes(lo - a, hi + a, a)
    index = ClosestPointIndex(shell if shell.vertex_normals is not None else shell.with_normals())
    r = index.query(nodes)
    inside = np.einsum("nd,nd->n", r.normals, nodes - r.points) < 0.0

    stride = max(1, len(nodes) // parity_samples)
    sample = np.arange(0, len(nodes), stride)
    # nodes sitting on the surface are ambiguous for both tests
    sample = sample[r.distances[sample] > 1e-9]
    parity = ray_parity_inside(shell, nodes[sample])
    disagree = float(np.mean(parity != inside[sample])) if len(sample) else 0.0
    if disagree > parity_tolerance:
        raise ValueError(f"shell appears open or self-intersecting: sign test and ray parity "
                         f"disagree on {disagree:.1%} of {len(sample)} samples")

    kept = bcc_tetrahedra(dims, keep=inside)
    if len(kept) < 10:
        raise ValueError(f"degenerate grid: only {len(kept)} tetrahedra inside the shell at resolution {resolution}")
    used = np.zeros(len(nodes), dtype=bool)
    used[kept.reshape(-1)] = True
    remap = np.cumsum(used) - 1
    grid = TetraGrid(nodes[used], remap[kept], np.zeros(int(used.sum()), np.int64), resolution)
    log.info("tetrahedralize: %d summits, %d tetrahedra (spacing %.4g m)", grid.n_summits, grid.n_tetrahedra, a)
    return grid


def nearest_index(points: np.ndarray, reference: np.ndarray, k: int = 8) -> np.ndarray:
    """Index of the nearest reference point, exact ties resolved to the lowest index."""
    from scipy.spatial import cKDTree

    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    reference = np.asarray(reference, dtype=np.float64).reshape(-1, 3)
    if len(reference) == 0:
        raise ValueError("empty reference set")
    k = min(k, len(reference))
    tree = cKDTree(reference)
    _, idx = tree.query(points, k=k)
    idx = idx.reshape(len(points), k)
    # re-evaluate distances identically for all candidates so ties compare exactly
    d2 = ((reference[idx] - points[:, None, :]) ** 2).sum(axis=2)
    best = d2.min(axis=1, keepdims=True)
    cand = np.where(d2 == best, idx, np.iinfo(np.int64).max)
    return cand.min(axis=1)


def assign_part_labels(grid: TetraGrid, template) -> TetraGrid:
    """Label each summit with the dominant bone of its nearest template vertex."""
    if template.n_vertices == 0:
        raise ValueError("empty template")
    nearest = nearest_index(grid.summits, template.vertices)
    return grid.with_labels(template.dominant_bones()[nearest])


@dataclass(frozen=True)
class SummitHierarchy:
    levels: list          # list of int64 arrays indexing level-0 summits
    part_labels: list     # per-level labels

    @property
    def sizes(self) -> list:
        return [len(lv) for lv in self.levels]

    def positions(self, grid: TetraGrid, level: int) -> np.ndarray:
        return grid.summits[self.levels[level]]


@njit(cache=True)
def farthest_point_sampling(points, n_samples):
    """Greedy FPS starting at index 0; ties go to the lowest index."""
    n = points.shape[0]
    out = np.empty(n_samples, np.int64)
    dist = np.full(n, np.inf)
    cur = 0
    for s in range(n_samples):
        out[s] = cur
        px, py, pz = points[cur, 0], points[cur, 1], points[cur, 2]
        nxt = 0
        far = -1.0
        for i in range(n):
            d = (points[i, 0] - px) ** 2 + (points[i, 1] - py) ** 2 + (points[i, 2] - pz) ** 2
            if d < dist[i]:
                dist[i] = d
            if dist[i] > far:
                far = dist[i]
                nxt = i
        cur = nxt
    return out


def build_hierarchy(grid: TetraGrid, level_sizes) -> SummitHierarchy:
    """Nested summit subsets by repeated farthest-point sampling."""
    sizes = [int(s) for s in level_sizes]
    if not sizes or sizes[0] != grid.n_summits:
        raise ValueError(f"first level size must equal the summit count {grid.n_summits}")
    if any(b >= a for a, b in zip(sizes, sizes[1:])) or sizes[-1] < 1:
        raise ValueError(f"level sizes must be strictly decreasing and positive: {sizes}")
    levels = [np.arange(grid.n_summits, dtype=np.int64)]
    for size in sizes[1:]:
        prev = levels[-1]
        pick = farthest_point_sampling(grid.summits[prev], size)
        levels.append(prev[pick])
    return SummitHierarchy(levels, [grid.part_labels[lv] for lv in levels])


# --- binary formats ------------------------------------------------------------

def save_grid(grid: TetraGrid, path) -> None:
    n_parts = int(grid.part_labels.max()) + 1 if grid.n_summits else 0
    if n_parts > 0xFFFF:
        raise ValueError("too many part labels for u16 storage")
    with open(path, "wb") as fh:
        fh.write(b"TGRD")
        fh.write(struct.pack("<IIII", 1, grid.n_summits, grid.n_tetrahedra, n_parts))
        fh.write(grid.summits.astype("<f4").tobytes())
        fh.write(grid.tetrahedra.astype("<u4").tobytes())
        fh.write(grid.part_labels.astype("<u2").tobytes())
        fh.write(struct.pack("<f", grid.resolution))


def load_grid(path) -> TetraGrid:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != b"TGRD":
        raise ValueError(f"{path}: not a TGRD file")
    version, s, t, _parts = struct.unpack_from("<IIII", data, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported TGRD version {version}")
    off = 20
    expected = off + 12 * s + 16 * t + 2 * s + 4
    if len(data) != expected:
        raise ValueError(f"{path}: size {len(data)} does not match header (expected {expected})")
    summits = np.frombuffer(data, "<f4", 3 * s, off).reshape(s, 3).astype(np.float64)
    off += 12 * s
    tets = np.frombuffer(data, "<u4", 4 * t, off).reshape(t, 4).astype(np.int64)
    off += 16 * t
    labels = np.frombuffer(data, "<u2", s, off).astype(np.int64)
    off += 2 * s
    (res,) = struct.unpack_from("<f", data, off)
    return TetraGrid(summits, tets, labels, float(np.float32(res)))


def save_hierarchy(h: SummitHierarchy, path) -> None:
    with open(path, "wb") as fh:
        fh.write(b"THIE")
        fh.write(struct.pack("<II", 1, len(h.levels)))
        for lv in h.levels:
            fh.write(struct.pack("<I", len(lv)))
            fh.write(np.asarray(lv).astype("<u4").tobytes())


def load_hierarchy(path, grid: TetraGrid | None = None) -> SummitHierarchy:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != b"THIE":
        raise ValueError(f"{path}: not a THIE file")
    version, n_levels = struct.unpack_from("<II", data, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported THIE version {version}")
    off = 12
    levels = []
    for _ in range(n_levels):
        (size,) = struct.unpack_from("<I", data, off)
        off += 4
        levels.append(np.frombuffer(data, "<u4", size, off).astype(np.int64))
        off += 4 * size
    labels = [grid.part_labels[lv] for lv in levels] if grid is not None else [np.zeros(len(lv), np.int64) for lv in levels]
    return SummitHierarchy(levels, labels)
