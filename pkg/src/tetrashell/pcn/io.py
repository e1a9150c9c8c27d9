"""TPCN weight files.

Layout (little endian): b"TPCN", u32 version, u32 layer count, grid path and
hierarchy path (u16 length + utf-8 each), u32 k, u8 part flag, u32 latent
size; then per layer: u8 type (0 bridge, 1 pcn), u32 n_in, u32 n_out,
u32 c_in, u32 c_out, u8 activation (0 linear, 1 relu), u64 edge count,
u64 adjacency hash (both 0 for the bridge), float32 weights in
(edge, c_in, c_out) order, plus the float32 bias for the bridge. Adjacency is rebuilt from the referenced grid and
hierarchy and checked against the stored hash.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from ..grid import load_grid, load_hierarchy
from .layers import BridgeLayer, PcnLayer
from .network import NetworkConfig, PcnNetwork, build_network

MAGIC = b"TPCN"
VERSION = 1
_ACT = {"linear": 0, "relu": 1}
_ACT_NAME = {v: k for k, v in _ACT.items()}
_LAYER = "<BIIIIBQQ"


def _put_str(fh, s: str):
    b = s.encode("utf-8")
    fh.write(struct.pack("<H", len(b)))
    fh.write(b)


def save_network(network: PcnNetwork, path, grid_path, hierarchy_path) -> None:
    """Paths to the grid and hierarchy are stored relative to the weight file when possible."""
    base = Path(path).resolve().parent

    def rel(p):
        p = Path(p).resolve()
        try:
            return os.path.relpath(p, base)
        except ValueError:
            return str(p)

    cfg = network.config
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, 1 + len(network.layers)))
        _put_str(fh, rel(grid_path))
        _put_str(fh, rel(hierarchy_path))
        fh.write(struct.pack("<IBI", cfg.k, int(cfg.part_restricted), network.bridge.latent_dim))
        b = network.bridge
        fh.write(struct.pack(_LAYER, 0, b.latent_dim, b.n_nodes, 1, b.channels, _ACT[b.activation], 0, 0))
        fh.write(b.weights.astype("<f4").tobytes())
        fh.write(b.bias.astype("<f4").tobytes())
        for layer in network.layers:
            fh.write(struct.pack(_LAYER, 1, layer.n_in, layer.n_out, layer.c_in, layer.c_out,
                                 _ACT[layer.activation], layer.adjacency.n_edges, layer.adjacency.content_hash()))
            fh.write(layer.weights.astype("<f4").tobytes())


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.off, self.path = data, 0, path

    def take(self, fmt):
        try:
            vals = struct.unpack_from(fmt, self.data, self.off)
        except struct.error:
            raise ValueError(f"{self.path}: truncated") from None
        self.off += struct.calcsize(fmt)
        return vals

    def floats(self, n):
        if self.off + 4 * n > len(self.data):
            raise ValueError(f"{self.path}: truncated")
        out = np.frombuffer(self.data, "<f4", n, self.off).astype(np.float64)
        self.off += 4 * n
        return out

    def string(self):
        (n,) = self.take("<H")
        s = self.data[self.off:self.off + n].decode("utf-8")
        self.off += n
        return s


def load_network(path, grid=None, hierarchy=None):
    """Returns (network, grid, hierarchy); grid/hierarchy are loaded from the stored paths if not given."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), path)
    if r.data[:4] != MAGIC:
        raise ValueError(f"{path}: not a TPCN file")
    r.off = 4
    version, n_layers = r.take("<II")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported TPCN version {version}")
    base = Path(path).resolve().parent
    grid_path, hier_path = base / r.string(), base / r.string()
    k, part, latent_dim = r.take("<IBI")
    if grid is None:
        grid = load_grid(grid_path)
    if hierarchy is None:
        hierarchy = load_hierarchy(hier_path, grid)

    layers = []
    for _ in range(n_layers):
        tag, n_in, n_out, c_in, c_out, act, n_edges, digest = r.take(_LAYER)
        if act not in _ACT_NAME or tag not in (0, 1):
            raise ValueError(f"{path}: bad layer header")
        if tag == 0:
            w = r.floats(n_in * n_out * c_out).reshape(n_in, n_out * c_out)
            layers.append((tag, n_out, c_out, act, digest, w, r.floats(n_out * c_out)))
        else:
            w = r.floats(n_edges * c_in * c_out).reshape(n_edges, c_in, c_out)
            layers.append((tag, n_out, c_out, act, digest, w, None))
    if r.off != len(r.data):
        raise ValueError(f"{path}: trailing bytes")
    if not layers or layers[0][0] != 0 or any(t != 1 for t, *_ in layers[1:]):
        raise ValueError(f"{path}: expected a bridge followed by pcn layers")

    cfg = NetworkConfig(latent_dim=latent_dim, channels=tuple(lay[2] for lay in layers), k=k,
                        part_restricted=bool(part))
    net = build_network(grid, hierarchy, cfg)
    _, n_nodes, c, act, _, w, bias = layers[0]
    net.bridge = BridgeLayer(w, bias, n_nodes, c, _ACT_NAME[act])
    for i, (_, n_out, c, act, digest, w, _) in enumerate(layers[1:]):
        adj = net.layers[i].adjacency
        if adj.content_hash() != digest or adj.n_out != n_out:
            raise ValueError(f"{path}: layer {i + 1} adjacency hash does not match the rebuilt hierarchy")
        net.layers[i] = PcnLayer(adj, w, _ACT_NAME[act])
    return PcnNetwork(net.bridge, net.layers, cfg), grid, hierarchy
