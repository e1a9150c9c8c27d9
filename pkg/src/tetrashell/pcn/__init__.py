"""Partially connected decoder from a latent code to per-summit values."""

from .adjacency import AdjacencyList, build_adjacency
from .layers import (BridgeLayer, PcnLayer, bridge_backward, bridge_forward, init_bridge, init_pcn_layer,
                     pcn_backward, pcn_forward)
from .network import (NetworkConfig, PcnNetwork, build_network, count_parameters, format_counts, infer,
                      pcn_layer_count, predict, train_toy)
from .io import load_network, save_network

__all__ = [
    "AdjacencyList", "build_adjacency", "BridgeLayer", "PcnLayer", "bridge_backward", "bridge_forward",
    "init_bridge", "init_pcn_layer", "pcn_backward", "pcn_forward", "NetworkConfig", "PcnNetwork",
    "build_network", "count_parameters", "format_counts", "infer", "pcn_layer_count", "predict", "train_toy",
    "load_network", "save_network",
]
