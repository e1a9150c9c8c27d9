"""Coarse-to-fine k-nearest-neighbor connectivity between hierarchy levels."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class AdjacencyList:
    """CSR connectivity: output node n reads input nodes indices[indptr[n]:indptr[n+1]]."""

    indptr: np.ndarray
    indices: np.ndarray
    n_in: int

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        if indptr.ndim != 1 or len(indptr) < 1 or indptr[0] != 0 or indptr[-1] != len(indices):
            raise ValueError("malformed indptr")
        if np.any(np.diff(indptr) < 0):
            raise ValueError("indptr must be non-decreasing")
        if len(indices) and (indices.min() < 0 or indices.max() >= self.n_in):
            raise ValueError(f"adjacency index out of range for {self.n_in} inputs")
        rows = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
        if len(indices) > 1:
            same_row = rows[1:] == rows[:-1]
            if np.any(same_row & (indices[1:] <= indices[:-1])):
                raise ValueError("adjacency lists must be strictly ascending")
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "n_in", int(self.n_in))

    @property
    def n_out(self) -> int:
        return len(self.indptr) - 1

    @property
    def n_edges(self) -> int:
        return len(self.indices)

    @property
    def counts(self) -> np.ndarray:
        """m(n) per output node."""
        return np.diff(self.indptr)

    def rows(self) -> np.ndarray:
        """Output node of every edge."""
        return np.repeat(np.arange(self.n_out, dtype=np.int64), self.counts)

    def neighbors(self, n: int) -> np.ndarray:
        return self.indices[self.indptr[n]:self.indptr[n + 1]]

    def transpose(self):
        """(t_indptr, t_edges): edges reading input j, in ascending edge order."""
        order = np.argsort(self.indices, kind="stable")
        t_indptr = np.zeros(self.n_in + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.indices, minlength=self.n_in), out=t_indptr[1:])
        return t_indptr, order.astype(np.int64)

    def content_hash(self) -> int:
        h = hashlib.sha256()
        h.update(np.int64(self.n_in).tobytes())
        h.update(self.indptr.astype("<i8").tobytes())
        h.update(self.indices.astype("<i8").tobytes())
        return int.from_bytes(h.digest()[:8], "little")

    @classmethod
    def from_lists(cls, lists, n_in: int) -> "AdjacencyList":
        lists = [sorted(int(j) for j in adj) for adj in lists]
        indptr = np.concatenate([[0], np.cumsum([len(a) for a in lists])])
        indices = np.array([j for adj in lists for j in adj], dtype=np.int64)
        return cls(indptr, indices, n_in)


def _knn(fine: np.ndarray, coarse: np.ndarray, k: int) -> np.ndarray:
    """k nearest coarse indices per fine point; exact distance ties go to the lower index."""
    k = min(k, len(coarse))
    extra = min(len(coarse), k + 4)
    _, idx = cKDTree(coarse).query(fine, k=extra)
    idx = idx.reshape(len(fine), extra)
    d2 = ((coarse[idx] - fine[:, None, :]) ** 2).sum(axis=2)
    # stable argsort on candidates pre-sorted by index gives (distance, index) order
    pre = np.argsort(idx, axis=1, kind="stable")
    idx = np.take_along_axis(idx, pre, axis=1)
    d2 = np.take_along_axis(d2, pre, axis=1)
    order = np.argsort(d2, axis=1, kind="stable")
    return np.take_along_axis(idx, order, axis=1)[:, :k]


def build_adjacency(coarse_pos, coarse_labels, fine_pos, fine_labels, k: int = 5,
                    part_restricted: bool = True) -> AdjacencyList:
    """Connect every fine node to its k nearest coarse nodes of the same part.

    Parts with fewer than k coarse nodes fall back to k-NN over all coarse
    nodes. Each list is stored sorted by index.
    """
    coarse = np.asarray(coarse_pos, dtype=np.float64).reshape(-1, 3)
    fine = np.asarray(fine_pos, dtype=np.float64).reshape(-1, 3)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(coarse) == 0 or len(fine) == 0:
        raise ValueError("both node sets must be non-empty")
    k_eff = min(k, len(coarse))
    out = np.empty((len(fine), k_eff), dtype=np.int64)
    if part_restricted:
        cl = np.asarray(coarse_labels, dtype=np.int64).reshape(-1)
        fl = np.asarray(fine_labels, dtype=np.int64).reshape(-1)
        fallback = np.zeros(len(fine), dtype=bool)
        for label in np.unique(fl):
            rows = np.flatnonzero(fl == label)
            cand = np.flatnonzero(cl == label)
            if len(cand) < k_eff:
                fallback[rows] = True
                continue
            out[rows] = cand[_knn(fine[rows], coarse[cand], k_eff)]
        if np.any(fallback):
            out[fallback] = _knn(fine[fallback], coarse, k_eff)
    else:
        out[:] = _knn(fine, coarse, k_eff)
    out.sort(axis=1)
    indptr = np.arange(len(fine) + 1, dtype=np.int64) * k_eff
    return AdjacencyList(indptr, out.ravel(), len(coarse))
