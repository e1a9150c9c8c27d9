"""Synthetic ellipsoid family for small end-to-end regression runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import SummitHierarchy, TetraGrid, build_hierarchy, tetrahedralize
from .primitives import ellipsoid, icosphere
from .tsdf import compute_tsdf

AXIS_RANGE = (0.10, 0.20)


@dataclass
class ToyDataset:
    grid: TetraGrid
    hierarchy: SummitHierarchy
    axes: np.ndarray      # (n, 3) semi-axes in meters
    latents: np.ndarray   # (n, latent_dim)
    fields: np.ndarray    # (n, summits)
    tau: float


def shape_latent(axes, latent_dim: int = 32, seed: int = 1) -> np.ndarray:
    """Fixed random cosine features of the normalized semi-axes."""
    a = np.atleast_2d(np.asarray(axes, dtype=np.float64))
    lo, hi = AXIS_RANGE
    z = (a - 0.5 * (lo + hi)) / (0.5 * (hi - lo))
    proj = np.random.default_rng(seed).normal(size=(latent_dim, 3)) * 3.0
    return np.cos(z @ proj.T + np.linspace(0.0, np.pi, latent_dim))


def toy_mesh(axes, subdivisions: int = 4):
    return ellipsoid(axes, subdivisions).with_normals()


def make_toy_dataset(n_samples: int = 20, resolution: float = 0.02, tau: float = 0.03,
                     level_sizes=(2000, 400, 80), latent_dim: int = 32, seed: int = 7) -> ToyDataset:
    """Ellipsoids with semi-axes drawn from AXIS_RANGE inside a spherical shell.

    The shell radius leaves one truncation band of room around the largest
    possible ellipsoid, so every field saturates to +1 on the grid boundary.
    """
    shell = icosphere(3, AXIS_RANGE[1] + 0.07)
    grid = tetrahedralize(shell, resolution)
    hierarchy = build_hierarchy(grid, [grid.n_summits, *level_sizes])
    axes = np.random.default_rng(seed).uniform(*AXIS_RANGE, size=(n_samples, 3))
    fields = np.stack([compute_tsdf(grid, toy_mesh(a), tau).values for a in axes])
    return ToyDataset(grid, hierarchy, axes, shape_latent(axes, latent_dim), fields, tau)
