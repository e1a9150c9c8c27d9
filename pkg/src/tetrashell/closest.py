"""Exact closest-point queries against triangle meshes.

A median-split bounding volume hierarchy over the triangles is traversed
per query (nearest child first). Pruning is strict (boxes farther than the
current best are skipped, equal ones are visited) so that ties between
triangles resolve to the lowest triangle index, as in a linear scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from . import threads as _threads  # noqa: F401  (sets NUMBA_NUM_THREADS)
from .mesh import TriMesh


@njit(cache=True, inline="always")
def _closest_on_triangle(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Barycentric weights (u, v, w) of the point of triangle abc closest to p."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return 1.0, 0.0, 0.0
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return 0.0, 1.0, 0.0
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return 1.0 - v, v, 0.0
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return 0.0, 0.0, 1.0
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return 1.0 - w, 0.0, w
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return 0.0, 1.0 - w, w
    s = va + vb + vc
    if s <= 0.0:
        # collinear corners: fall back to vertex a
        return 1.0, 0.0, 0.0
    denom = 1.0 / s
    v = vb * denom
    w = vc * denom
    return 1.0 - v - w, v, w


@njit(cache=True)
def _build_bvh(tri_min, tri_max, centroids, leaf_size):
    n = centroids.shape[0]
    order = np.arange(n)
    cap = 2 * n + 1
    bmin = np.empty((cap, 3))
    bmax = np.empty((cap, 3))
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    start = np.zeros(cap, np.int64)
    count = np.zeros(cap, np.int64)
    stack = np.empty((cap, 3), np.int64)  # node, lo, hi
    sp = 0
    stack[0, 0], stack[0, 1], stack[0, 2] = 0, 0, n
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node, lo, hi = stack[sp, 0], stack[sp, 1], stack[sp, 2]
        for k in range(3):
            bmin[node, k] = np.inf
            bmax[node, k] = -np.inf
        cmin = np.full(3, np.inf)
        cmax = np.full(3, -np.inf)
        for i in range(lo, hi):
            t = order[i]
            for k in range(3):
                bmin[node, k] = min(bmin[node, k], tri_min[t, k])
                bmax[node, k] = max(bmax[node, k], tri_max[t, k])
                cmin[k] = min(cmin[k], centroids[t, k])
                cmax[k] = max(cmax[k], centroids[t, k])
        start[node] = lo
        count[node] = hi - lo
        if hi - lo <= leaf_size:
            continue
        axis = 0
        ext = cmax - cmin
        if ext[1] > ext[axis]:
            axis = 1
        if ext[2] > ext[axis]:
            axis = 2
        sub = order[lo:hi].copy()
        keys = np.empty(hi - lo)
        for i in range(hi - lo):
            keys[i] = centroids[sub[i], axis]
        perm = np.argsort(keys, kind="mergesort")
        for i in range(hi - lo):
            order[lo + i] = sub[perm[i]]
        mid = (lo + hi) // 2
        l_id, r_id = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = l_id, r_id
        stack[sp, 0], stack[sp, 1], stack[sp, 2] = l_id, lo, mid
        sp += 1
        stack[sp, 0], stack[sp, 1], stack[sp, 2] = r_id, mid, hi
        sp += 1
    return order, bmin[:n_nodes].copy(), bmax[:n_nodes].copy(), left[:n_nodes].copy(), \
        right[:n_nodes].copy(), start[:n_nodes].copy(), count[:n_nodes].copy()


@njit(cache=True)
def _node_slabs(tri, start, count):
    """Per node: mean face normal and the range of vertex projections onto it."""
    n_nodes = start.shape[0]
    slab = np.zeros((n_nodes, 5))
    for node in range(n_nodes):
        nx, ny, nz = 0.0, 0.0, 0.0
        for i in range(start[node], start[node] + count[node]):
            nx += tri[i, 9]
            ny += tri[i, 10]
            nz += tri[i, 11]
        length = np.sqrt(nx * nx + ny * ny + nz * nz)
        if length == 0.0:
            slab[node, 3] = -np.inf
            slab[node, 4] = np.inf
            continue
        nx, ny, nz = nx / length, ny / length, nz / length
        lo, hi = np.inf, -np.inf
        for i in range(start[node], start[node] + count[node]):
            for k in range(3):
                h = nx * tri[i, 3 * k] + ny * tri[i, 3 * k + 1] + nz * tri[i, 3 * k + 2]
                lo = min(lo, h)
                hi = max(hi, h)
        slab[node, 0], slab[node, 1], slab[node, 2] = nx, ny, nz
        slab[node, 3], slab[node, 4] = lo, hi
    return slab


@njit(cache=True, inline="always")
def _node_dist2(px, py, pz, bmin, bmax, slab, node):
    d = _box_dist2(px, py, pz, bmin, bmax, node)
    h = slab[node, 0] * px + slab[node, 1] * py + slab[node, 2] * pz
    g = 0.0
    if h < slab[node, 3]:
        g = slab[node, 3] - h
    elif h > slab[node, 4]:
        g = h - slab[node, 4]
    return max(d, g * g)


@njit(cache=True, inline="always")
def _box_dist2(px, py, pz, bmin, bmax, node):
    d = 0.0
    if px < bmin[node, 0]:
        d += (bmin[node, 0] - px) ** 2
    elif px > bmax[node, 0]:
        d += (px - bmax[node, 0]) ** 2
    if py < bmin[node, 1]:
        d += (bmin[node, 1] - py) ** 2
    elif py > bmax[node, 1]:
        d += (py - bmax[node, 1]) ** 2
    if pz < bmin[node, 2]:
        d += (bmin[node, 2] - pz) ** 2
    elif pz > bmax[node, 2]:
        d += (pz - bmax[node, 2]) ** 2
    return d


@njit(cache=True, parallel=True)
def _query_bvh(queries, tri, order, bmin, bmax, slab, left, right, start, count, depth):
    """``tri`` rows are (a, b, c, unit normal) in BVH leaf order."""
    nq = queries.shape[0]
    out_face = np.empty(nq, np.int64)
    out_bary = np.empty((nq, 3))
    out_d2 = np.empty(nq)
    for qi in prange(nq):
        px, py, pz = queries[qi, 0], queries[qi, 1], queries[qi, 2]
        stack = np.empty(depth + 2, np.int64)
        sp = 1
        stack[0] = 0
        best = np.inf
        best_t = -1
        bu, bv, bw = 0.0, 0.0, 0.0
        while sp > 0:
            sp -= 1
            node = stack[sp]
            # slack keeps boxes touching an exactly tied triangle in play
            limit = best * (1.0 + 1e-12)
            if _node_dist2(px, py, pz, bmin, bmax, slab, node) > limit:
                continue
            if left[node] < 0:
                for i in range(start[node], start[node] + count[node]):
                    ax, ay, az = tri[i, 0], tri[i, 1], tri[i, 2]
                    # distance to the supporting plane is a lower bound
                    pd = tri[i, 9] * (px - ax) + tri[i, 10] * (py - ay) + tri[i, 11] * (pz - az)
                    if pd * pd > limit:
                        continue
                    bx, by, bz = tri[i, 3], tri[i, 4], tri[i, 5]
                    cx, cy, cz = tri[i, 6], tri[i, 7], tri[i, 8]
                    u, v, w = _closest_on_triangle(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz)
                    qx = u * ax + v * bx + w * cx
                    qy = u * ay + v * by + w * cy
                    qz = u * az + v * bz + w * cz
                    d2 = (px - qx) ** 2 + (py - qy) ** 2 + (pz - qz) ** 2
                    t = order[i]
                    if d2 < best or (d2 == best and t < best_t):
                        best = d2
                        best_t = t
                        bu, bv, bw = u, v, w
                        limit = best * (1.0 + 1e-12)
                continue
            l, r = left[node], right[node]
            dl = _node_dist2(px, py, pz, bmin, bmax, slab, l)
            dr = _node_dist2(px, py, pz, bmin, bmax, slab, r)
            # push the farther child first so the nearer one is popped next
            if dl <= dr:
                stack[sp] = r
                stack[sp + 1] = l
            else:
                stack[sp] = l
                stack[sp + 1] = r
            sp += 2
        out_face[qi] = best_t
        out_bary[qi, 0], out_bary[qi, 1], out_bary[qi, 2] = bu, bv, bw
        out_d2[qi] = best
    return out_face, out_bary, out_d2


@njit(cache=True)
def _tree_depth(left, right):
    depth = np.zeros(left.shape[0], np.int64)
    best = 0
    for node in range(left.shape[0]):
        if left[node] >= 0:
            depth[left[node]] = depth[node] + 1
            depth[right[node]] = depth[node] + 1
            best = max(best, depth[node] + 1)
    return best


@dataclass(frozen=True)
class ClosestResult:
    points: np.ndarray     # (N, 3)
    normals: np.ndarray    # (N, 3) interpolated, unit length
    distances: np.ndarray  # (N,)
    faces: np.ndarray      # (N,) triangle index
    bary: np.ndarray       # (N, 3)


class ClosestPointIndex:
    """Exact point-to-triangle-set queries over an immutable mesh."""

    def __init__(self, mesh: TriMesh, leaf_size: int = 4):
        if mesh.n_faces == 0:
            raise ValueError("cannot build a closest-point index over an empty mesh")
        if mesh.vertex_normals is None:
            mesh = mesh.with_normals()
        self.mesh = mesh
        tri = mesh.vertices[mesh.faces]
        built = _build_bvh(tri.min(axis=1), tri.max(axis=1), tri.mean(axis=1), leaf_size)
        self._order, self._bmin, self._bmax, self._left, self._right, self._start, self._count = built
        self._depth = int(_tree_depth(self._left, self._right))
        fn = mesh.face_normals()
        length = np.linalg.norm(fn, axis=1, keepdims=True)
        fn = np.divide(fn, length, out=np.zeros_like(fn), where=length > 0)
        self._tri = np.ascontiguousarray(np.concatenate([tri.reshape(-1, 9), fn], axis=1)[self._order])
        self._slab = _node_slabs(self._tri, self._start, self._count)

    def query(self, points) -> ClosestResult:
        q = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        m = self.mesh
        face, bary, d2 = _query_bvh(q, self._tri, self._order, self._bmin, self._bmax, self._slab,
                                    self._left, self._right, self._start, self._count, self._depth)
        corners = m.faces[face]
        pts = np.einsum("nk,nkd->nd", bary, m.vertices[corners])
        nrm = np.einsum("nk,nkd->nd", bary, m.vertex_normals[corners])
        length = np.linalg.norm(nrm, axis=1)
        good = length > 0
        nrm[good] /= length[good, None]
        # distance from the reported point itself (re-evaluated, not the kernel's d2)
        dist = np.linalg.norm(q - pts, axis=1)
        return ClosestResult(pts, nrm, dist, face, bary)


def closest_surface_point(index: ClosestPointIndex, q):
    """Single-query convenience: ``(point, normal, distance)``."""
    r = index.query(np.asarray(q, dtype=np.float64).reshape(1, 3))
    return r.points[0], r.normals[0], float(r.distances[0])


@njit(cache=True, parallel=True)
def _ray_parity(origins, direction, verts, faces):
    n = origins.shape[0]
    out = np.zeros(n, np.int64)
    dx, dy, dz = direction[0], direction[1], direction[2]
    for i in prange(n):
        ox, oy, oz = origins[i, 0], origins[i, 1], origins[i, 2]
        hits = 0
        for t in range(faces.shape[0]):
            a, b, c = faces[t, 0], faces[t, 1], faces[t, 2]
            e1x = verts[b, 0] - verts[a, 0]
            e1y = verts[b, 1] - verts[a, 1]
            e1z = verts[b, 2] - verts[a, 2]
            e2x = verts[c, 0] - verts[a, 0]
            e2y = verts[c, 1] - verts[a, 1]
            e2z = verts[c, 2] - verts[a, 2]
            hx = dy * e2z - dz * e2y
            hy = dz * e2x - dx * e2z
            hz = dx * e2y - dy * e2x
            det = e1x * hx + e1y * hy + e1z * hz
            if det == 0.0:
                continue
            inv = 1.0 / det
            sx = ox - verts[a, 0]
            sy = oy - verts[a, 1]
            sz = oz - verts[a, 2]
            u = (sx * hx + sy * hy + sz * hz) * inv
            if u < 0.0 or u > 1.0:
                continue
            qx = sy * e1z - sz * e1y
            qy = sz * e1x - sx * e1z
            qz = sx * e1y - sy * e1x
            v = (dx * qx + dy * qy + dz * qz) * inv
            if v < 0.0 or u + v > 1.0:
                continue
            s = (e2x * qx + e2y * qy + e2z * qz) * inv
            if s > 0.0:
                hits += 1
        out[i] = hits
    return out


# irrational-ish direction keeps rays off mesh edges for lattice-aligned inputs
_RAY_DIR = np.array([0.5773502691896258, 0.5773502691896258, 0.5773502691896258]) + \
    np.array([0.0131, -0.0077, 0.0029])
_RAY_DIR /= np.linalg.norm(_RAY_DIR)


def ray_parity_inside(mesh: TriMesh, points) -> np.ndarray:
    """Inside test by counting ray crossings (odd = inside). Linear in face count."""
    q = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    hits = _ray_parity(q, _RAY_DIR, mesh.vertices, mesh.faces)
    return (hits % 2) == 1


def signed_inside(index: ClosestPointIndex, points) -> np.ndarray:
    """Inside test from the sign of n . (q - closest point); on-surface counts as outside."""
    q = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    r = index.query(q)
    return np.einsum("nd,nd->n", r.normals, q - r.points) < 0.0
