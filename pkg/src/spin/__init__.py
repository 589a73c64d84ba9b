"""Parallel-aggregation graph classifier with attention readouts, 1-WL tools and expressiveness checks."""
from spin.graph import Graph, OperatorKind, build_operator, operator_bank
from spin.kernels import BACKEND
from spin.model import GraphSet, SpinConfig, SpinParams, embed, forward_batch, precompute_graph
from spin.training import TrainConfig, cross_validate, evaluate, train_model
from spin.wl import brute_force_isomorphic, wl_distinguish

__all__ = [
    "BACKEND", "Graph", "GraphSet", "OperatorKind", "SpinConfig", "SpinParams", "TrainConfig",
    "brute_force_isomorphic", "build_operator", "cross_validate", "embed", "evaluate",
    "forward_batch", "operator_bank", "precompute_graph", "train_model", "wl_distinguish",
]
__version__ = "0.1.0"
