"""Marching tetrahedra isosurface extraction and skinned re-posing."""

from __future__ import annotations

from itertools import permutations

import numpy as np

from .mesh import TriMesh
from .skinning import SkinnedTemplate, bind_vertices, blend_points, warp
from .tsdf import TsdfField

ISO_NUDGE = 1e-9


def _parity(p) -> int:
    p = list(p)
    swaps = 0
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            swaps += 1
    return swaps % 2


def _even_order(first, rest):
    """Order ``first`` + ``rest`` as an even permutation of (0, 1, 2, 3)."""
    for perm in permutations(rest):
        if _parity((first, *perm)) == 0:
            return perm
    raise AssertionError("unreachable")


def _case_table():
    """For each 4-bit sign code: local edge pairs forming a triangle or a quad cycle.

    Tetrahedra are positively oriented, so for an even permutation (i, j, k, l)
    the triangle through edges (ij, ik, il) faces away from i. Quads are
    listed as the cycle (ik, jk, jl, il) with positives {i, j} and (i, j, k, l)
    even, which faces the positive pair.
    """
    table = {}
    for code in range(1, 15):
        pos = [v for v in range(4) if code >> v & 1]
        neg = [v for v in range(4) if not code >> v & 1]
        if len(pos) in (1, 3):
            lone = pos[0] if len(pos) == 1 else neg[0]
            a, b, c = _even_order(lone, [v for v in range(4) if v != lone])
            tri = [(lone, a), (lone, b), (lone, c)]
            if len(pos) == 1:
                # the triangle faces away from a positive summit: flip it
                tri = [tri[0], tri[2], tri[1]]
            table[code] = tri
        else:
            i, j = pos
            k, l = neg
            if _parity((i, j, k, l)):
                k, l = l, k
            table[code] = [(i, k), (j, k), (j, l), (i, l)]
    return table


_CASES = _case_table()


def extract_isosurface(field: TsdfField, iso: float = 0.0) -> TriMesh:
    """Triangulate the ``iso`` level set of a summit field over its tetrahedra.

    Output vertices sit on crossing grid edges, one per edge, ordered by the
    sorted (lower summit, higher summit) key; triangles face increasing values.
    """
    grid = field.grid
    vals = np.asarray(field.values, dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise ValueError("field contains non-finite values")
    vals = np.where(vals == iso, iso + ISO_NUDGE, vals)
    pos = vals > iso
    tets = grid.tetrahedra
    n_sum = np.int64(grid.n_summits)
    code = (pos[tets] * np.array([1, 2, 4, 8])).sum(axis=1)

    # collect (tet id, slot, edge key) for every polygon corner
    polys = []  # (tet ids, (n, corners) edge keys)
    for c, edges in _CASES.items():
        sel = np.flatnonzero(code == c)
        if len(sel) == 0:
            continue
        t = tets[sel]
        keys = []
        for a, b in edges:
            lo = np.minimum(t[:, a], t[:, b])
            hi = np.maximum(t[:, a], t[:, b])
            keys.append(lo * n_sum + hi)
        polys.append((sel, np.stack(keys, axis=1)))
    if not polys:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    all_keys = np.concatenate([k.ravel() for _, k in polys])
    uniq, inverse = np.unique(all_keys, return_inverse=True)
    ea, eb = uniq // n_sum, uniq % n_sum
    va, vb = vals[ea], vals[eb]
    tt = (iso - va) / (vb - va)
    pa, pb = grid.summits[ea], grid.summits[eb]
    verts = pa + tt[:, None] * (pb - pa)

    tri_tet, tri_sub, faces = [], [], []
    offset = 0
    for sel, keys in polys:
        n, corners = keys.shape
        ids = inverse[offset:offset + n * corners].reshape(n, corners)
        offset += n * corners
        if corners == 3:
            faces.append(ids)
            tri_tet.append(sel)
            tri_sub.append(np.zeros(n, dtype=np.int64))
        else:
            # rotate the quad cycle to start at its smallest edge key, fan from there
            start = np.argmin(keys, axis=1)
            rot = (start[:, None] + np.arange(4)) % 4
            q = np.take_along_axis(ids, rot, axis=1)
            faces += [q[:, [0, 1, 2]], q[:, [0, 2, 3]]]
            tri_tet += [sel, sel]
            tri_sub += [np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)]
    faces = np.concatenate(faces)
    order = np.lexsort((np.concatenate(tri_sub), np.concatenate(tri_tet)))
    return TriMesh(verts, faces[order]).with_normals()


def star_template_vertices(template: SkinnedTemplate) -> np.ndarray:
    """Template vertices carried to the star pose by its own transforms."""
    return blend_points(template.vertices, template.weights, template.rotations, template.translations)


def repose(mesh: TriMesh, template: SkinnedTemplate, rotations, translations) -> TriMesh:
    """Bind a star-pose mesh to the template skeleton and skin it into a new pose.

    ``rotations``/``translations`` map the star pose to the target pose.
    """
    star = SkinnedTemplate(star_template_vertices(template), template.weights, template.joints,
                           template.parents, bone_names=template.bone_names)
    w = bind_vertices(mesh, star)
    r = np.asarray(rotations, dtype=np.float64).reshape(-1, 3, 3)
    t = np.asarray(translations, dtype=np.float64).reshape(-1, 3)
    if len(r) != template.n_bones or len(t) != template.n_bones:
        raise ValueError(f"pose has {len(r)} bones, template has {template.n_bones}")
    return warp(mesh, w, r, t)
