"""SPIN: per-branch MLPs over precomputed operator powers, attention/sum readouts,
concatenated global readout and an MLP classifier.

Minibatches are handled by stacking the node rows of all graphs and keeping
segment offsets, so every per-graph reduction (softmax, sum, mean, max) runs
inside its own segment and never mixes nodes of different graphs.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from spin import kernels
from spin.graph import FeatureBank, Graph, OperatorKind, operator_bank
from spin.nn import (
    IDENTITY,
    RELU,
    GradientTape,
    MlpParams,
    dropout,
    mlp_backward,
    mlp_forward,
)

READOUTS = ("sum", "mean", "max")


@dataclass
class SpinConfig:
    input_dim: int = 1
    R: int = 3
    operator: OperatorKind = OperatorKind.ADJACENCY
    hidden_dim: int = 16
    g_layers: int = 2
    g_final_activation: str = "relu"
    attention: bool = True
    readout: str = "sum"
    dropout_rate: float = 0.0
    classifier_layers: int = 2
    classifier_hidden: int = 0  # 0 means use hidden_dim
    num_classes: int = 2
    dtype: str = "float64"

    def __post_init__(self):
        self.operator = OperatorKind.parse(self.operator)
        if self.R < 0:
            raise ValueError("R must be >= 0")
        if self.hidden_dim < 1 or self.input_dim < 1:
            raise ValueError("dimensions must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.g_layers < 1 or self.classifier_layers < 1:
            raise ValueError("MLPs need at least one layer")
        if self.readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    @property
    def branches(self) -> int:
        return self.R + 1

    @property
    def embedding_dim(self) -> int:
        return self.branches * self.hidden_dim

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    # flat ``key = value`` text, shared by config files and checkpoints
    def to_text(self) -> str:
        rows = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, OperatorKind):
                v = v.value
            elif isinstance(v, bool):
                v = "on" if v else "off"
            rows.append(f"{f.name} = {v}")
        return "\n".join(rows) + "\n"

    @classmethod
    def from_mapping(cls, values: dict) -> "SpinConfig":
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in values.items():
            if key not in types:
                continue
            kwargs[key] = _coerce(raw, getattr(cls, key, None) if key != "operator" else None, key)
        return cls(**kwargs)


def _coerce(raw, default, key):
    if not isinstance(raw, str):
        return raw
    if key == "operator":
        return OperatorKind.parse(raw)
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "on", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


@dataclass
class SpinParams:
    branch_mlps: list
    attention_vectors: Optional[list]
    classifier: MlpParams

    @classmethod
    def init(cls, config: SpinConfig, rng: np.random.Generator) -> "SpinParams":
        dt = config.np_dtype
        d, h = config.input_dim, config.hidden_dim
        g_final = RELU if config.g_final_activation == "relu" else IDENTITY
        branches = [
            MlpParams.init([d] + [h] * config.g_layers, rng, RELU, g_final, dt)
            for _ in range(config.branches)
        ]
        att = None
        if config.attention:
            bound = np.sqrt(6.0 / (h + 1))
            att = [rng.uniform(-bound, bound, size=h).astype(dt) for _ in range(config.branches)]
        ch = config.classifier_hidden or h
        dims = [config.embedding_dim] + [ch] * (config.classifier_layers - 1) + [config.num_classes]
        classifier = MlpParams.init(dims, rng, RELU, IDENTITY, dt)
        return cls(branches, att, classifier)

    def arrays(self) -> list:
        out = []
        for mlp in self.branch_mlps:
            out += mlp.arrays()
        if self.attention_vectors is not None:
            out += list(self.attention_vectors)
        out += self.classifier.arrays()
        return out

    def copy(self) -> "SpinParams":
        new = SpinParams(
            [m.zeros_like() for m in self.branch_mlps],
            None if self.attention_vectors is None else [np.zeros_like(a) for a in self.attention_vectors],
            self.classifier.zeros_like(),
        )
        for dst, src in zip(new.arrays(), self.arrays()):
            dst[...] = src
        return new

    def load_arrays(self, arrays: Sequence[np.ndarray]) -> None:
        mine = self.arrays()
        if len(mine) != len(arrays) or any(a.shape != b.shape for a, b in zip(mine, arrays)):
            raise ValueError("parameter arrays do not match this model's layout")
        for dst, src in zip(mine, arrays):
            dst[...] = src


@dataclass
class SpinGrads:
    branch_tapes: list
    attention: Optional[list]
    classifier: GradientTape

    def arrays(self) -> list:
        out = []
        for tape in self.branch_tapes:
            out += tape.arrays()
        if self.attention is not None:
            out += list(self.attention)
        out += self.classifier.arrays()
        return out


@dataclass
class PrecomputedGraph:
    bank: FeatureBank
    label: Optional[int] = None


def precompute_graph(g: Graph, kind: "OperatorKind | str", R: int) -> PrecomputedGraph:
    return PrecomputedGraph(operator_bank(g, kind, R), g.label)


@dataclass
class GraphSet:
    """Node rows of many graphs stacked per branch, with segment offsets."""

    xs: np.ndarray  # (R+1, total_nodes, d)
    offsets: np.ndarray  # (G+1,)
    labels: np.ndarray  # (G,)

    @classmethod
    def from_graphs(cls, pgs: Sequence[PrecomputedGraph], dtype=np.float64) -> "GraphSet":
        if not pgs:
            raise ValueError("empty graph set")
        R = pgs[0].bank.R
        if any(pg.bank.R != R for pg in pgs):
            raise ValueError("graphs were precomputed with different R")
        counts = np.array([pg.bank.node_count for pg in pgs], dtype=np.int64)
        if np.any(counts == 0):
            raise ValueError("graphs with no nodes cannot be embedded")
        offsets = np.zeros(len(pgs) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        xs = np.ascontiguousarray(
            np.concatenate([pg.bank.stacked() for pg in pgs], axis=1), dtype=dtype
        )
        labels = np.array([-1 if pg.label is None else pg.label for pg in pgs], dtype=np.int64)
        return cls(xs, offsets, labels)

    def __len__(self) -> int:
        return len(self.offsets) - 1

    @property
    def R(self) -> int:
        return self.xs.shape[0] - 1

    def subset(self, indices) -> "GraphSet":
        indices = np.asarray(indices, dtype=np.int64)
        starts, stops = self.offsets[indices], self.offsets[indices + 1]
        counts = stops - starts
        offsets = np.zeros(len(indices) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        rows = np.repeat(starts - offsets[:-1], counts) + np.arange(offsets[-1])
        return GraphSet(self.xs[:, rows], offsets, self.labels[indices])

    def astype(self, dtype) -> "GraphSet":
        return GraphSet(np.ascontiguousarray(self.xs, dtype=dtype), self.offsets, self.labels)


# --- single-graph building blocks -----------------------------------------

def branch_transform(params: SpinParams, r: int, B_r: np.ndarray) -> np.ndarray:
    z, _ = mlp_forward(params.branch_mlps[r], np.asarray(B_r))
    return z


def attention_weights(w_r: np.ndarray, Z_r: np.ndarray) -> np.ndarray:
    """Softmax over nodes of ``ReLU(<w_r, z_v>)``."""
    if len(Z_r) == 0:
        raise ValueError("attention over an empty node set")
    beta = np.maximum(Z_r @ w_r, 0.0)
    return kernels.segment_softmax(beta, np.array([0, len(Z_r)]))


def branch_readout(Z_r: np.ndarray, alpha: Optional[np.ndarray] = None, mode: str = "sum") -> np.ndarray:
    """Pool node rows into one vector: ``sum_v alpha_v z_v`` (alpha defaults to ones).

    ``mode`` "mean"/"max" replace the sum; they exist for comparison only.
    """
    Z_r = np.asarray(Z_r, dtype=np.float64)
    weighted = Z_r if alpha is None else np.asarray(alpha)[:, None] * Z_r
    offsets = np.array([0, len(Z_r)])
    if mode == "sum":
        return kernels.segment_sum(weighted, offsets)[0]
    if mode == "mean":
        return kernels.segment_sum(weighted, offsets)[0] / len(Z_r)
    if mode == "max":
        return kernels.segment_max(weighted, offsets)[0][0]
    raise ValueError(f"unknown readout {mode!r}")


def global_readout(branch_embeddings: Sequence[np.ndarray]) -> np.ndarray:
    """Ordered concatenation of the branch embeddings."""
    dims = {len(s) for s in branch_embeddings}
    if len(dims) > 1:
        raise ValueError("branch embeddings differ in length")
    return np.concatenate([np.asarray(s) for s in branch_embeddings])


def node_embedding_combine(zs: Sequence[np.ndarray], mlp: Optional[MlpParams] = None) -> np.ndarray:
    """Combine a node's per-branch vectors: concatenation, then an optional MLP.

    Accepts vectors (one node) or matrices (rows are nodes).
    """
    zs = [np.asarray(z) for z in zs]
    vec = zs[0].ndim == 1
    h = np.concatenate([z[None, :] if vec else z for z in zs], axis=1)
    if mlp is not None:
        h, _ = mlp_forward(mlp, h)
    return h[0] if vec else h


# --- batched forward / backward -------------------------------------------

@dataclass
class BranchCache:
    mlp_cache: object
    z: np.ndarray  # after dropout
    mask: Optional[np.ndarray]
    score: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    argmax: Optional[np.ndarray] = None


@dataclass
class ForwardCache:
    offsets: np.ndarray
    seg: np.ndarray
    counts: np.ndarray
    branches: list
    embedding: np.ndarray  # e_G rows, before dropout
    e_mask: Optional[np.ndarray]
    classifier_cache: object

    def branch_embeddings(self, hidden_dim: int) -> list:
        return [self.embedding[:, r * hidden_dim:(r + 1) * hidden_dim] for r in range(len(self.branches))]


def forward_batch(
    params: SpinParams,
    config: SpinConfig,
    batch: GraphSet,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
):
    """Return ``(logits, cache)`` for every graph in ``batch``."""
    if batch.R != config.R:
        raise ValueError(f"batch precomputed with R={batch.R}, model expects R={config.R}")
    if batch.xs.shape[2] != config.input_dim:
        raise ValueError(f"batch feature dim {batch.xs.shape[2]} != input_dim {config.input_dim}")
    offsets = batch.offsets
    counts = np.diff(offsets)
    seg = np.repeat(np.arange(len(counts)), counts)
    rate = config.dropout_rate if training else 0.0
    caches, pooled = [], []
    for r in range(config.branches):
        z, mcache = mlp_forward(params.branch_mlps[r], batch.xs[r])
        z, mask = dropout(z, rate, rng, training)
        bc = BranchCache(mcache, z, mask)
        if config.attention:
            bc.score = z @ params.attention_vectors[r]
            bc.alpha = kernels.segment_softmax(np.maximum(bc.score, 0.0), offsets)
            weighted_sum = kernels.segment_weighted_sum(z, bc.alpha, offsets)
            weighted = None
        else:
            weighted = z
            weighted_sum = None
        if config.readout == "sum":
            s = weighted_sum if weighted_sum is not None else kernels.segment_sum(z, offsets)
        elif config.readout == "mean":
            s = (weighted_sum if weighted_sum is not None else kernels.segment_sum(z, offsets)) / counts[:, None]
        else:
            if weighted is None:
                weighted = bc.alpha[:, None] * z
            s, bc.argmax = kernels.segment_max(weighted, offsets)
        caches.append(bc)
        pooled.append(s)
    e = np.concatenate(pooled, axis=1)
    e_in, e_mask = dropout(e, rate, rng, training)
    logits, ccache = mlp_forward(params.classifier, e_in)
    return logits, ForwardCache(offsets, seg, counts, caches, e, e_mask, ccache)


def backward_batch(params: SpinParams, config: SpinConfig, cache: ForwardCache,
                   grad_logits: np.ndarray) -> SpinGrads:
    """Exact gradients of ``sum(grad_logits * logits)`` w.r.t. every parameter."""
    ctape = mlp_backward(params.classifier, cache.classifier_cache, grad_logits)
    g_e = ctape.input
    if cache.e_mask is not None:
        g_e = g_e * cache.e_mask
    h = config.hidden_dim
    seg = cache.seg
    tapes, att_grads = [], [] if config.attention else None
    for r, bc in enumerate(cache.branches):
        g_s = g_e[:, r * h:(r + 1) * h]
        if config.readout == "sum":
            g_w = g_s[seg]
        elif config.readout == "mean":
            g_w = (g_s / cache.counts[:, None])[seg]
        else:
            g_w = np.zeros_like(bc.z)
            cols = np.broadcast_to(np.arange(h), bc.argmax.shape)
            np.add.at(g_w, (bc.argmax.ravel(), cols.ravel()), g_s.ravel())
        if config.attention:
            w_r = params.attention_vectors[r]
            g_z = bc.alpha[:, None] * g_w
            g_alpha = np.einsum("ij,ij->i", g_w, bc.z)
            g_beta = kernels.segment_softmax_backward(bc.alpha, g_alpha, cache.offsets)
            g_score = np.where(bc.score > 0, g_beta, 0.0).astype(g_beta.dtype, copy=False)
            att_grads.append(bc.z.T @ g_score)
            g_z = g_z + g_score[:, None] * w_r[None, :]
        else:
            g_z = g_w
        if bc.mask is not None:
            g_z = g_z * bc.mask
        tapes.append(mlp_backward(params.branch_mlps[r], bc.mlp_cache, g_z))
    return SpinGrads(tapes, att_grads, ctape)


def forward(params: SpinParams, config: SpinConfig, pg: PrecomputedGraph,
            training: bool = False, rng: Optional[np.random.Generator] = None):
    """Single-graph forward; returns ``(logits vector, cache)``."""
    batch = GraphSet.from_graphs([pg], config.np_dtype)
    logits, cache = forward_batch(params, config, batch, training, rng)
    return logits[0], cache


def backward(params: SpinParams, config: SpinConfig, cache: ForwardCache, grad_logits) -> SpinGrads:
    grad_logits = np.asarray(grad_logits)
    if grad_logits.ndim == 1:
        grad_logits = grad_logits[None, :]
    return backward_batch(params, config, cache, grad_logits)


@dataclass
class GraphEmbedding:
    branch_embeddings: list
    embedding: np.ndarray


def embed(params: SpinParams, config: SpinConfig, pg: PrecomputedGraph) -> GraphEmbedding:
    """Evaluation-mode graph embedding ``e_G`` with its per-branch parts."""
    _, cache = forward(params, config, pg)
    e = cache.embedding[0]
    return GraphEmbedding([s[0] for s in cache.branch_embeddings(config.hidden_dim)], e)


def embed_batch(params: SpinParams, config: SpinConfig, batch: GraphSet) -> np.ndarray:
    _, cache = forward_batch(params, config, batch)
    return cache.embedding
