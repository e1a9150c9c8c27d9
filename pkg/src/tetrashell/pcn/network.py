"""Bridge + stacked partially connected layers decoding a latent code to summit values."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..grid import SummitHierarchy, TetraGrid
from ..tsdf import TsdfField
from .adjacency import build_adjacency
from .layers import (BridgeLayer, activate, bridge_backward, init_bridge,
                     init_pcn_layer, pcn_backward)
from . import kernels

log = logging.getLogger(__name__)

BYTES_PER_PARAM = 4
DEFAULT_CHANNELS = (8, 4, 2, 1)


@dataclass
class NetworkConfig:
    latent_dim: int = 256
    channels: tuple = DEFAULT_CHANNELS   # bridge width, then one entry per PCN layer output
    k: int = 5
    part_restricted: bool = True
    seed: int = 0
    zero_last: bool = False

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkConfig":
        known = {f for f in cls.__dataclass_fields__}
        cfg = cls(**{key: val for key, val in doc.items() if key in known})
        cfg.channels = tuple(int(c) for c in cfg.channels)
        return cfg


@dataclass
class PcnNetwork:
    bridge: BridgeLayer
    layers: list
    config: NetworkConfig = field(default_factory=NetworkConfig)

    def __post_init__(self):
        prev_n, prev_c = self.bridge.n_nodes, self.bridge.channels
        for i, layer in enumerate(self.layers):
            if layer.n_in != prev_n or layer.c_in != prev_c:
                raise ValueError(f"layer {i} expects ({layer.n_in}, {layer.c_in}) inputs, gets ({prev_n}, {prev_c})")
            prev_n, prev_c = layer.n_out, layer.c_out
        if prev_c != 1:
            raise ValueError("the last layer must produce one channel")

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].n_out if self.layers else self.bridge.n_nodes

    def parameters(self) -> list:
        return [self.bridge.weights, self.bridge.bias] + [layer.weights for layer in self.layers]

    def forward(self, latent, keep: bool = False):
        """Unclamped outputs (batch, n_outputs); with ``keep`` also the per-layer (input, pre) cache."""
        x, _ = self.bridge._latent(latent)
        pre = kernels.dense_forward_kernel(x, self.bridge.weights, self.bridge.bias)
        cache = [(x, pre)]
        f = activate(pre, self.bridge.activation).reshape(len(x), self.bridge.n_nodes, self.bridge.channels)
        for layer in self.layers:
            pre = kernels.pcn_forward_kernel(f, layer.adjacency.indptr, layer.adjacency.indices, layer.weights)
            cache.append((f, pre))
            f = activate(pre, layer.activation)
        out = f[:, :, 0]
        return (out, cache) if keep else out

    def backward(self, cache, grad_out) -> list:
        """Parameter gradients (ordered like :meth:`parameters`) for d loss / d output."""
        g = np.asarray(grad_out, dtype=np.float64)[:, :, None]
        grads = []
        for layer, (f_in, pre) in zip(reversed(self.layers), reversed(cache[1:])):
            g, gw = pcn_backward(layer, f_in, g, pre)
            grads.append(gw)
        x, pre = cache[0]
        _, gw, gb = bridge_backward(self.bridge, x, g.reshape(len(x), -1), pre)
        return [gw, gb] + grads[::-1]


def build_network(grid: TetraGrid, hierarchy: SummitHierarchy, config: NetworkConfig | None = None) -> PcnNetwork:
    """One PCN layer per hierarchy step, coarsest level first, ending at level 0."""
    cfg = config or NetworkConfig()
    n_layers = len(hierarchy.levels) - 1
    if len(cfg.channels) != n_layers + 1:
        raise ValueError(f"{n_layers} PCN layers need {n_layers + 1} channel widths, got {cfg.channels}")
    if cfg.channels[-1] != 1:
        raise ValueError("the last channel width must be 1")
    rng = np.random.default_rng(cfg.seed)
    deepest = hierarchy.levels[-1]
    bridge = init_bridge(cfg.latent_dim, len(deepest), cfg.channels[0], "relu", rng)
    layers = []
    for step in range(n_layers):
        coarse, fine = n_layers - step, n_layers - step - 1
        adj = build_adjacency(grid.summits[hierarchy.levels[coarse]], hierarchy.part_labels[coarse],
                              grid.summits[hierarchy.levels[fine]], hierarchy.part_labels[fine],
                              cfg.k, cfg.part_restricted)
        last = step == n_layers - 1
        layers.append(init_pcn_layer(adj, cfg.channels[step], cfg.channels[step + 1],
                                     "linear" if last else "relu", rng, zero=last and cfg.zero_last))
    return PcnNetwork(bridge, layers, cfg)


# --- accounting ------------------------------------------------------------------

@dataclass
class LayerCount:
    name: str
    n_in: int
    n_out: int
    c_in: int
    c_out: int
    params: int
    dense_params: int

    @property
    def bytes(self) -> int:
        return self.params * BYTES_PER_PARAM

    @property
    def dense_bytes(self) -> int:
        return self.dense_params * BYTES_PER_PARAM


def pcn_layer_count(n_edges: int, n_in: int, n_out: int, c_in: int, c_out: int, name: str = "pcn") -> LayerCount:
    """Partially connected weights vs the fully connected layer with the same node sets."""
    return LayerCount(name, n_in, n_out, c_in, c_out, int(n_edges) * c_in * c_out, int(n_in) * n_out * c_in * c_out)


def count_parameters(network: PcnNetwork) -> list:
    b = network.bridge
    rows = [LayerCount("bridge", b.latent_dim, b.n_nodes, 1, b.channels, b.n_params, b.n_params)]
    for i, layer in enumerate(network.layers):
        rows.append(pcn_layer_count(layer.adjacency.n_edges, layer.n_in, layer.n_out, layer.c_in, layer.c_out,
                                    f"pcn{i}"))
    return rows


def format_counts(rows) -> str:
    gb = 1e9
    lines = [f"{'layer':<8}{'n_in':>10}{'n_out':>10}{'c':>7}{'params':>14}{'GB':>10}{'dense GB':>12}"]
    for r in rows:
        lines.append(f"{r.name:<8}{r.n_in:>10}{r.n_out:>10}{f'{r.c_in}>{r.c_out}':>7}{r.params:>14}"
                     f"{r.bytes / gb:>10.4g}{r.dense_bytes / gb:>12.4g}")
    total = sum(r.params for r in rows)
    dense = sum(r.dense_params for r in rows)
    lines.append(f"{'total':<8}{'':>10}{'':>10}{'':>7}{total:>14}{total * BYTES_PER_PARAM / gb:>10.4g}"
                 f"{dense * BYTES_PER_PARAM / gb:>12.4g}")
    return "\n".join(lines)


# --- training --------------------------------------------------------------------

@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params, grads):
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def mse(pred, target) -> float:
    d = np.asarray(pred) - np.asarray(target)
    return float(np.mean(d * d))


def train_toy(network: PcnNetwork, latents, targets, epochs: int = 100, batch_size: int = 5, seed: int = 0,
              lr: float = 1e-3, target_loss: float | None = None, callback=None):
    """Minibatch Adam on the mean squared error of raw (unclamped) outputs.

    Returns the network (trained in place) and the per-epoch mean batch loss.
    Stops early once an epoch's loss drops below ``target_loss``.
    """
    x = np.asarray(latents, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("empty dataset")
    if y.shape != (len(x), network.n_outputs):
        raise ValueError(f"targets must be ({len(x)}, {network.n_outputs}), got {y.shape}")
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    rng = np.random.default_rng(seed)
    opt = Adam(lr=lr)
    params = network.parameters()
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(x))
        losses = []
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            out, cache = network.forward(x[idx], keep=True)
            diff = out - y[idx]
            losses.append(float(np.mean(diff * diff)))
            grads = network.backward(cache, 2.0 * diff / diff.size)
            opt.step(params, grads)
        history.append(float(np.mean(losses)))
        if callback is not None:
            callback(epoch, history[-1])
        if target_loss is not None and history[-1] < target_loss:
            break
    return network, history


def predict(network: PcnNetwork, latent) -> np.ndarray:
    """Outputs clamped to [-1, 1]."""
    x = np.asarray(latent, dtype=np.float64)
    out = network.forward(x if x.ndim == 2 else x[None])
    return np.clip(out, -1.0, 1.0)


def infer(network: PcnNetwork, latent, grid: TetraGrid, tau: float) -> TsdfField:
    if network.n_outputs != grid.n_summits:
        raise ValueError(f"network predicts {network.n_outputs} values, grid has {grid.n_summits} summits")
    return TsdfField(grid, predict(network, latent)[0], tau)
