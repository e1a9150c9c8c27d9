"""Ground-truth truncated signed distance fields on tetrahedral grids."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .closest import ClosestPointIndex
from .grid import TetraGrid
from .mesh import TriMesh
from .skinning import SkinnedTemplate, bind_vertices, warp_to_star

DEFAULT_TAU = 0.03


@dataclass(frozen=True)
class TsdfField:
    grid: TetraGrid
    values: np.ndarray
    tau: float

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if len(v) != self.grid.n_summits:
            raise ValueError(f"{len(v)} values for {self.grid.n_summits} summits")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "tau", float(self.tau))


def tsdf_values(points: np.ndarray, index: ClosestPointIndex, tau: float) -> np.ndarray:
    """Truncated point-to-plane distance to the closest surface point.

    Within ``tau`` (Euclidean distance to the closest point) the value is
    n.(v - v_hat) / tau; beyond it only the sign survives, with sign(0) = +1.
    """
    if not tau > 0:
        raise ValueError("tau must be > 0")
    v = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    r = index.query(v)
    plane = np.einsum("nd,nd->n", r.normals, v - r.points)
    near = r.distances <= tau
    out = np.where(plane >= 0.0, 1.0, -1.0)
    out[near] = plane[near] / tau
    return np.clip(out, -1.0, 1.0)


def compute_tsdf(grid: TetraGrid, surface: TriMesh, tau: float = DEFAULT_TAU) -> TsdfField:
    if surface.n_faces == 0:
        raise ValueError("empty surface")
    index = ClosestPointIndex(surface if surface.vertex_normals is not None else surface.with_normals())
    return TsdfField(grid, tsdf_values(grid.summits, index, tau), tau)


def generate_gt_field(scan: TriMesh, template: SkinnedTemplate, grid: TetraGrid,
                      tau: float = DEFAULT_TAU) -> TsdfField:
    """Bind the posed scan to the skeleton, warp it to the star pose, then evaluate the TSDF."""
    weights = bind_vertices(scan, template)
    star = warp_to_star(scan, weights, template)
    return compute_tsdf(grid, star, tau)


def save_field(field: TsdfField, path) -> None:
    with open(path, "wb") as fh:
        fh.write(b"TTSF")
        fh.write(struct.pack("<IIf", 1, len(field.values), field.tau))
        fh.write(field.values.astype("<f4").tobytes())


def load_field(path, grid: TetraGrid) -> TsdfField:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != b"TTSF":
        raise ValueError(f"{path}: not a TTSF file")
    version, count, tau = struct.unpack_from("<IIf", data, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported TTSF version {version}")
    if count != grid.n_summits:
        raise ValueError(f"{path}: {count} values but the grid has {grid.n_summits} summits")
    if len(data) != 16 + 4 * count:
        raise ValueError(f"{path}: truncated")
    values = np.frombuffer(data, "<f4", count, 16).astype(np.float64)
    return TsdfField(grid, values, float(np.float32(tau)))
