"""Surface distance metrics, error heatmaps, and grid memory comparisons."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .closest import ClosestPointIndex
from .grid import TetraGrid
from .mesh import TriMesh
from .mesh_io import save_ply

DEFAULT_SAMPLES = 100_000
DEFAULT_SEED = 0
DEFAULT_DMAX = 0.02


def sample_surface(mesh: TriMesh, n: int, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Area-uniform points on the surface (face chosen by area, then uniform barycentrics)."""
    if mesh.n_faces == 0:
        raise ValueError("cannot sample an empty mesh")
    if n < 1:
        raise ValueError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    area = mesh.face_areas()
    total = area.sum()
    if not total > 0:
        raise ValueError("mesh has zero area")
    cdf = np.cumsum(area) / total
    face = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), mesh.n_faces - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.vertices[mesh.faces[face]]
    return ((1 - r1)[:, None] * tri[:, 0] + (r1 * (1 - r2))[:, None] * tri[:, 1]
            + (r1 * r2)[:, None] * tri[:, 2])


def _one_way(points: np.ndarray, target: TriMesh) -> float:
    return float(ClosestPointIndex(target).query(points).distances.mean())


def chamfer_distance(a: TriMesh, b: TriMesh, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED) -> float:
    """Symmetric sample-to-surface Chamfer distance in centimeters.

    Both meshes are sampled with the same seed, so swapping the arguments
    swaps the two directional terms exactly.
    """
    if a.n_faces == 0 or b.n_faces == 0:
        raise ValueError("chamfer distance needs two non-empty meshes")
    ab = _one_way(sample_surface(a, samples, seed), b)
    ba = _one_way(sample_surface(b, samples, seed), a)
    return 100.0 * (0.5 * ab + 0.5 * ba)


def error_heatmap(recon: TriMesh, gt: TriMesh) -> np.ndarray:
    """Distance (m) from each reconstructed vertex to the closest point on ``gt``."""
    if recon.n_vertices == 0 or gt.n_faces == 0:
        raise ValueError("heatmap needs two non-empty meshes")
    return ClosestPointIndex(gt).query(recon.vertices).distances


def heat_colors(distances: np.ndarray, dmax: float = DEFAULT_DMAX) -> np.ndarray:
    """Linear blue (0) to red (``dmax`` and beyond) uint8 RGB."""
    if not dmax > 0:
        raise ValueError("dmax must be > 0")
    s = np.clip(np.asarray(distances, dtype=np.float64) / dmax, 0.0, 1.0)
    rgb = np.stack([s, np.zeros_like(s), 1.0 - s], axis=1)
    return np.round(255.0 * rgb).astype(np.uint8)


def save_heatmap(recon: TriMesh, distances: np.ndarray, path, dmax: float = DEFAULT_DMAX) -> None:
    save_ply(recon, path, colors=heat_colors(distances, dmax))


@dataclass
class MemoryReport:
    shell_summits: int
    uniform_voxels: int
    ratio: float
    resolution: float
    bbox_extent: tuple

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def table(self) -> str:
        ext = " x ".join(f"{e:.3f}" for e in self.bbox_extent)
        return "\n".join([
            f"resolution (m)      {self.resolution:g}",
            f"bbox extent (m)     {ext}",
            f"shell summits       {self.shell_summits}",
            f"uniform voxels      {self.uniform_voxels}",
            f"ratio               {self.ratio:.2f}x",
        ])


def compare_memory(grid: TetraGrid, resolution: float) -> MemoryReport:
    """Shell summit count against a uniform grid over the same bounding box."""
    if not resolution > 0:
        raise ValueError("resolution must be > 0")
    if grid.n_summits == 0:
        raise ValueError("empty grid")
    extent = grid.summits.max(axis=0) - grid.summits.min(axis=0)
    cells = np.maximum(np.ceil(extent / resolution - 1e-9), 1).astype(np.int64)
    uniform = int(np.prod(cells))
    return MemoryReport(grid.n_summits, uniform, uniform / grid.n_summits, float(resolution),
                        tuple(float(e) for e in extent))
