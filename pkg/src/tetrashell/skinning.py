"""Skinned templates and linear blend skinning."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mesh import TriMesh


@dataclass(frozen=True)
class SkinnedTemplate:
    """Skeleton plus per-vertex skin weights.

    Bone ``b`` spans joint ``parents[b]`` -> joint ``b`` (the root has parent
    -1). ``weights`` is a dense (V, B) matrix whose rows are the sparse
    per-vertex weight lists. ``rotations``/``translations`` are the per-bone
    rigid transforms taking the current pose to the canonical star pose.
    """

    vertices: np.ndarray
    weights: np.ndarray
    joints: np.ndarray
    parents: np.ndarray
    rotations: Optional[np.ndarray] = None
    translations: Optional[np.ndarray] = None
    bone_names: list = field(default_factory=list)
    faces: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        j = np.ascontiguousarray(self.joints, dtype=np.float64).reshape(-1, 3)
        p = np.asarray(self.parents, dtype=np.int64).reshape(-1)
        nb = len(p)
        w = np.ascontiguousarray(self.weights, dtype=np.float64).reshape(len(v), nb) if len(v) else np.zeros((0, nb))
        if len(j) != nb:
            raise ValueError("one joint per bone expected")
        if np.any(w < 0) or (len(w) and np.max(np.abs(w.sum(axis=1) - 1.0)) > 1e-6):
            raise ValueError("skin weights must be non-negative and sum to 1 per vertex")
        rot = np.tile(np.eye(3), (nb, 1, 1)) if self.rotations is None else \
            np.asarray(self.rotations, dtype=np.float64).reshape(nb, 3, 3)
        tr = np.zeros((nb, 3)) if self.translations is None else \
            np.asarray(self.translations, dtype=np.float64).reshape(nb, 3)
        check_rigid(rot)
        names = list(self.bone_names) or [f"bone{b}" for b in range(nb)]
        if len(names) != nb:
            raise ValueError("bone_names length does not match bone count")
        faces = None if self.faces is None else np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        for name, val in (("vertices", v), ("weights", w), ("joints", j), ("parents", p),
                          ("rotations", rot), ("translations", tr), ("bone_names", names), ("faces", faces)):
            object.__setattr__(self, name, val)

    @property
    def n_bones(self) -> int:
        return len(self.parents)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def bones(self) -> np.ndarray:
        """(parent joint, child joint) pairs."""
        return np.stack([self.parents, np.arange(self.n_bones)], axis=1)

    def dominant_bones(self) -> np.ndarray:
        """Argmax weight per vertex; ties resolve to the lowest bone id."""
        return np.argmax(self.weights, axis=1)

    def mesh(self) -> TriMesh:
        if self.faces is None:
            raise ValueError("template has no faces")
        return TriMesh(self.vertices, self.faces)

    def with_transforms(self, rotations, translations) -> "SkinnedTemplate":
        return SkinnedTemplate(self.vertices, self.weights, self.joints, self.parents,
                               rotations, translations, self.bone_names, self.faces)

    def sparse_weights(self, eps: float = 0.0) -> list:
        return [[[int(b), float(row[b])] for b in np.flatnonzero(row > eps)] for row in self.weights]


def check_rigid(rotations: np.ndarray, tol: float = 1e-6) -> None:
    r = np.asarray(rotations, dtype=np.float64).reshape(-1, 3, 3)
    gram = np.einsum("bji,bjk->bik", r, r)
    if len(r) and (np.max(np.abs(gram - np.eye(3))) > tol or np.max(np.abs(np.linalg.det(r) - 1.0)) > tol):
        raise ValueError("bone rotations must be orthonormal with determinant +1")


def invert_transforms(rotations, translations):
    r = np.asarray(rotations, dtype=np.float64)
    t = np.asarray(translations, dtype=np.float64)
    rt = np.transpose(r, (0, 2, 1))
    return rt, -np.einsum("bij,bj->bi", rt, t)


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * kx @ kx


def rotation_about_point(axis, angle: float, pivot):
    """Rigid transform (R, t) rotating by ``angle`` about an axis through ``pivot``."""
    r = rotation_about_axis(axis, angle)
    p = np.asarray(pivot, dtype=np.float64)
    return r, p - r @ p


def bind_vertices(scan: TriMesh, template: SkinnedTemplate) -> np.ndarray:
    """Copy the weight row of each scan vertex's nearest template vertex."""
    from .grid import nearest_index

    if template.n_vertices == 0:
        raise ValueError("empty template")
    return template.weights[nearest_index(scan.vertices, template.vertices)].copy()


def blend_points(points: np.ndarray, weights: np.ndarray, rotations, translations) -> np.ndarray:
    """x' = sum_b w_b (R_b x + t_b), accumulated bone by bone in id order.

    Evaluated as x + sum_b w_b ((R_b - I) x + t_b) so identity transforms
    return the input bit for bit even when weights are blended.
    """
    x = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    w = np.asarray(weights, dtype=np.float64)
    r = np.asarray(rotations, dtype=np.float64)
    t = np.asarray(translations, dtype=np.float64)
    if w.shape != (len(x), len(r)):
        raise ValueError(f"weights shape {w.shape} does not match {len(x)} points x {len(r)} bones")
    out = x.copy()
    eye = np.eye(3)
    for b in range(len(r)):
        active = w[:, b] != 0.0
        d = r[b] - eye
        if not np.any(active) or (not d.any() and not t[b].any()):
            continue
        xb = x[active]
        # elementwise products keep results independent of BLAS threading
        disp = xb[:, 0:1] * d[:, 0] + xb[:, 1:2] * d[:, 1] + xb[:, 2:3] * d[:, 2] + t[b]
        out[active] += w[active, b:b + 1] * disp
    return out


def _check_weights(weights, template: SkinnedTemplate, n_vertices: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != n_vertices:
        raise ValueError(f"expected one weight row per vertex, got shape {w.shape}")
    if w.shape[1] != template.n_bones:
        raise ValueError(f"weights reference {w.shape[1]} bones, template has {template.n_bones}")
    return w


def warp_to_star(scan: TriMesh, weights, template: SkinnedTemplate) -> TriMesh:
    """Linear blend skinning of ``scan`` by the template's current->star transforms."""
    w = _check_weights(weights, template, scan.n_vertices)
    moved = blend_points(scan.vertices, w, template.rotations, template.translations)
    return TriMesh(moved, scan.faces).with_normals()


def warp(mesh: TriMesh, weights, rotations, translations) -> TriMesh:
    moved = blend_points(mesh.vertices, weights, rotations, translations)
    return TriMesh(moved, mesh.faces).with_normals()


# --- JSON documents --------------------------------------------------------------

def template_to_dict(t: SkinnedTemplate) -> dict:
    doc = {
        "joints": t.joints.tolist(),
        "parents": t.parents.tolist(),
        "bone_names": list(t.bone_names),
        "vertices": t.vertices.tolist(),
        "weights": t.sparse_weights(),
        "rotations": t.rotations.tolist(),
        "translations": t.translations.tolist(),
    }
    if t.faces is not None:
        doc["faces"] = t.faces.tolist()
    return doc


def template_from_dict(doc: dict) -> SkinnedTemplate:
    parents = np.asarray(doc["parents"], dtype=np.int64)
    nb = len(parents)
    verts = np.asarray(doc["vertices"], dtype=np.float64).reshape(-1, 3)
    w = np.zeros((len(verts), nb))
    if len(doc["weights"]) != len(verts):
        raise ValueError("one weight list per template vertex expected")
    for i, row in enumerate(doc["weights"]):
        for b, val in row:
            if not 0 <= int(b) < nb:
                raise ValueError(f"vertex {i} references unknown bone {b}")
            w[i, int(b)] += float(val)
    return SkinnedTemplate(verts, w, doc["joints"], parents, doc.get("rotations"), doc.get("translations"),
                           doc.get("bone_names", []), doc.get("faces"))


def save_template(t: SkinnedTemplate, path) -> None:
    with open(path, "w") as fh:
        json.dump(template_to_dict(t), fh)


def load_template(path) -> SkinnedTemplate:
    with open(path) as fh:
        return template_from_dict(json.load(fh))


def load_pose(path, n_bones: Optional[int] = None):
    """Per-bone ``rotations`` (3x3) and ``translations`` from a JSON pose document."""
    with open(path) as fh:
        doc = json.load(fh)
    r = np.asarray(doc["rotations"], dtype=np.float64).reshape(-1, 3, 3)
    t = np.asarray(doc.get("translations", np.zeros((len(r), 3))), dtype=np.float64).reshape(-1, 3)
    if len(r) != len(t) or (n_bones is not None and len(r) != n_bones):
        raise ValueError(f"{path}: pose must give one rotation and translation per bone")
    check_rigid(r)
    return r, t


def save_pose(path, rotations, translations) -> None:
    with open(path, "w") as fh:
        json.dump({"rotations": np.asarray(rotations).tolist(),
                   "translations": np.asarray(translations).tolist()}, fh)
