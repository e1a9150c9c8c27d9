"""Partially connected layers and the dense bridge."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .adjacency import AdjacencyList

ACTIVATIONS = ("linear", "relu")


def activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "linear":
        return pre
    raise ValueError(f"unknown activation {activation!r}")


def activation_grad(pre: np.ndarray, grad_out: np.ndarray, activation: str) -> np.ndarray:
    """Chain rule through the activation; ReLU uses subgradient 0 at 0."""
    if activation == "relu":
        return np.where(pre > 0.0, grad_out, 0.0)
    if activation == "linear":
        return grad_out
    raise ValueError(f"unknown activation {activation!r}")


def _batched(f: np.ndarray, n: int, c: int, what: str):
    f = np.asarray(f, dtype=np.float64)
    squeeze = f.ndim == 2
    if squeeze:
        f = f[None]
    if f.ndim != 3 or f.shape[1:] != (n, c):
        raise ValueError(f"{what}: expected shape (batch, {n}, {c}) or ({n}, {c}), got {f.shape}")
    return np.ascontiguousarray(f), squeeze


@dataclass
class PcnLayer:
    """Each output node mixes the channels of its own adjacent inputs with its own weights.

    ``weights`` has shape (n_edges, c_in, c_out); row e belongs to output
    node rows()[e] and input node indices[e].
    """

    adjacency: AdjacencyList
    weights: np.ndarray
    activation: str = "relu"
    _transpose: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 3 or self.weights.shape[0] != self.adjacency.n_edges:
            raise ValueError(f"weights must be ({self.adjacency.n_edges}, c_in, c_out), got {self.weights.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def c_out(self) -> int:
        return self.weights.shape[2]

    @property
    def n_in(self) -> int:
        return self.adjacency.n_in

    @property
    def n_out(self) -> int:
        return self.adjacency.n_out

    @property
    def n_params(self) -> int:
        return self.weights.size

    def transposed(self):
        if self._transpose is None:
            t_indptr, t_edges = self.adjacency.transpose()
            self._transpose = (t_indptr, t_edges, self.adjacency.rows())
        return self._transpose

    def preactivation(self, f_in: np.ndarray) -> np.ndarray:
        f, _ = _batched(f_in, self.n_in, self.c_in, "pcn input")
        return kernels.pcn_forward_kernel(f, self.adjacency.indptr, self.adjacency.indices, self.weights)


def init_pcn_layer(adjacency: AdjacencyList, c_in: int, c_out: int, activation: str = "relu",
                   rng=None, zero: bool = False) -> PcnLayer:
    """He-uniform weights with fan-in m(n) * c_in of the owning output node."""
    if zero:
        return PcnLayer(adjacency, np.zeros((adjacency.n_edges, c_in, c_out)), activation)
    rng = np.random.default_rng(rng)
    fan_in = np.repeat(adjacency.counts, adjacency.counts) * c_in
    bound = np.sqrt(6.0 / np.maximum(fan_in, 1))
    w = rng.uniform(-1.0, 1.0, size=(adjacency.n_edges, c_in, c_out)) * bound[:, None, None]
    return PcnLayer(adjacency, w, activation)


def pcn_forward(layer: PcnLayer, f_in: np.ndarray) -> np.ndarray:
    f, squeeze = _batched(f_in, layer.n_in, layer.c_in, "pcn input")
    out = activate(kernels.pcn_forward_kernel(f, layer.adjacency.indptr, layer.adjacency.indices, layer.weights),
                   layer.activation)
    return out[0] if squeeze else out


def pcn_backward(layer: PcnLayer, f_in: np.ndarray, grad_out: np.ndarray, pre: np.ndarray | None = None):
    """Exact gradients (grad_f_in, grad_W) of the summed loss over the batch."""
    f, squeeze = _batched(f_in, layer.n_in, layer.c_in, "pcn input")
    g, _ = _batched(grad_out if not squeeze else np.asarray(grad_out)[None], layer.n_out, layer.c_out, "pcn grad")
    if len(g) != len(f):
        raise ValueError("batch sizes of input and gradient differ")
    if pre is None:
        pre = kernels.pcn_forward_kernel(f, layer.adjacency.indptr, layer.adjacency.indices, layer.weights)
    g = np.ascontiguousarray(activation_grad(pre, g, layer.activation))
    adj = layer.adjacency
    grad_w = kernels.pcn_weight_grad_kernel(f, g, adj.indptr, adj.indices, layer.c_in)
    t_indptr, t_edges, rows = layer.transposed()
    grad_f = kernels.pcn_input_grad_kernel(g, layer.weights, rows, t_indptr, t_edges, layer.n_in)
    return (grad_f[0] if squeeze else grad_f), grad_w


@dataclass
class BridgeLayer:
    """Dense affine map from a latent vector to (n_nodes, channels) features."""

    weights: np.ndarray  # (latent_dim, n_nodes * channels)
    bias: np.ndarray     # (n_nodes * channels,)
    n_nodes: int
    channels: int
    activation: str = "relu"

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64).reshape(-1)
        width = self.n_nodes * self.channels
        if self.weights.ndim != 2 or self.weights.shape[1] != width or self.bias.shape != (width,):
            raise ValueError(f"bridge weights must be (latent, {width}) with bias ({width},)")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def latent_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_params(self) -> int:
        return self.weights.size + self.bias.size

    def _latent(self, latent):
        x = np.asarray(latent, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None]
        if x.ndim != 2 or x.shape[1] != self.latent_dim:
            raise ValueError(f"latent must have length {self.latent_dim}, got shape {np.shape(latent)}")
        return np.ascontiguousarray(x), squeeze

    def preactivation(self, latent) -> np.ndarray:
        x, _ = self._latent(latent)
        return kernels.dense_forward_kernel(x, self.weights, self.bias)


def init_bridge(latent_dim: int, n_nodes: int, channels: int, activation: str = "relu", rng=None) -> BridgeLayer:
    rng = np.random.default_rng(rng)
    bound = np.sqrt(6.0 / latent_dim)
    w = rng.uniform(-bound, bound, size=(latent_dim, n_nodes * channels))
    return BridgeLayer(w, np.zeros(n_nodes * channels), n_nodes, channels, activation)


def bridge_forward(layer: BridgeLayer, latent) -> np.ndarray:
    """Features of shape (batch, n_nodes, channels), or (n_nodes, channels) for a single latent."""
    x, squeeze = layer._latent(latent)
    out = activate(kernels.dense_forward_kernel(x, layer.weights, layer.bias), layer.activation)
    out = out.reshape(len(x), layer.n_nodes, layer.channels)
    return out[0] if squeeze else out


def bridge_backward(layer: BridgeLayer, latent, grad_out, pre: np.ndarray | None = None):
    """(grad_latent, grad_W, grad_bias) of the summed loss over the batch."""
    x, squeeze = layer._latent(latent)
    g = np.asarray(grad_out, dtype=np.float64).reshape(len(x), -1)
    if g.shape[1] != layer.weights.shape[1]:
        raise ValueError("gradient shape does not match bridge output")
    if pre is None:
        pre = kernels.dense_forward_kernel(x, layer.weights, layer.bias)
    g = np.ascontiguousarray(activation_grad(pre, g, layer.activation))
    grad_w = kernels.dense_weight_grad_kernel(x, g)
    grad_b = kernels.column_sum(g)
    grad_x = kernels.dense_input_grad_kernel(g, layer.weights)
    return (grad_x[0] if squeeze else grad_x), grad_w, grad_b
