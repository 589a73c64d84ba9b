"""Graphs, sparse aggregation operators and the precomputed operator-power bank."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from spin import kernels


def canonical_edges(edges, node_count: Optional[int] = None) -> np.ndarray:
    """Return edges as a sorted, deduplicated ``(E, 2)`` int64 array with ``u < v``.

    Self-loops are dropped.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if node_count is not None and e.size:
        if e.min() < 0 or e.max() >= node_count:
            raise ValueError(f"edge endpoint outside [0, {node_count})")
    e = e[e[:, 0] != e[:, 1]]
    e = np.sort(e, axis=1)
    if len(e) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(e, axis=0)


@dataclass
class Graph:
    """Undirected simple graph with a dense node-feature matrix."""

    node_count: int
    edges: np.ndarray
    features: np.ndarray = None
    label: Optional[int] = None

    def __post_init__(self):
        self.node_count = int(self.node_count)
        if self.node_count < 0:
            raise ValueError("node_count must be non-negative")
        self.edges = canonical_edges(self.edges, self.node_count)
        if self.features is None:
            self.features = np.ones((self.node_count, 1))
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        if self.features.shape[0] != self.node_count:
            raise ValueError(
                f"features have {self.features.shape[0]} rows for {self.node_count} nodes"
            )

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        np.add.at(deg, self.edges.ravel(), 1)
        return deg

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.node_count)]
        for u, v in self.edges.tolist():
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def permuted(self, perm: Sequence[int]) -> "Graph":
        """Relabel so that old node ``i`` becomes node ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        feats = np.empty_like(self.features)
        feats[perm] = self.features
        return Graph(self.node_count, perm[self.edges], feats, self.label)

    def with_features(self, features) -> "Graph":
        return Graph(self.node_count, self.edges, features, self.label)


class OperatorKind(str, enum.Enum):
    """Aggregation operator used to build the branch inputs."""

    ADJACENCY = "adjacency"
    NORMALIZED = "normalized"
    NORMALIZED_PLUS_ADJACENCY = "normalized+adjacency"

    @classmethod
    def parse(cls, text: "str | OperatorKind") -> "OperatorKind":
        if isinstance(text, cls):
            return text
        aliases = {
            "a": cls.ADJACENCY,
            "adj": cls.ADJACENCY,
            "adjacency": cls.ADJACENCY,
            "norm": cls.NORMALIZED,
            "normalized": cls.NORMALIZED,
            "normalizedadjacency": cls.NORMALIZED,
            "norm+adj": cls.NORMALIZED_PLUS_ADJACENCY,
            "normalized+adjacency": cls.NORMALIZED_PLUS_ADJACENCY,
            "normalizedplusadjacency": cls.NORMALIZED_PLUS_ADJACENCY,
        }
        key = str(text).strip().lower().replace("_", "").replace("-", "")
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown operator kind {text!r}") from None


@dataclass
class CsrMatrix:
    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.col_idx)

    def check(self, symmetric: bool = False) -> None:
        """Raise ``ValueError`` if the structural invariants do not hold."""
        rp, ci = self.row_ptr, self.col_idx
        if not (len(rp) == self.n_rows + 1 and rp[0] == 0 and rp[-1] == len(ci) == len(self.values)):
            raise ValueError("row_ptr inconsistent with column/value arrays")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr is not monotone")
        for i in range(self.n_rows):
            cols = ci[rp[i]:rp[i + 1]]
            if len(cols) > 1 and np.any(np.diff(cols) <= 0):
                raise ValueError(f"row {i} columns not strictly increasing")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise ValueError("column index out of range")
        if symmetric:
            dense = self.to_dense()
            if not np.array_equal(dense, dense.T):
                raise ValueError("matrix is not symmetric")

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))
        out[rows, self.col_idx] = self.values
        return out

    def matmul(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        vec = x.ndim == 1
        y = kernels.csr_spmm(self.row_ptr, self.col_idx, self.values, x[:, None] if vec else x)
        return y[:, 0] if vec else y

    __matmul__ = matmul

    def __add__(self, other: "CsrMatrix") -> "CsrMatrix":
        if (self.n_rows, self.n_cols) != (other.n_rows, other.n_cols):
            raise ValueError("shape mismatch")
        rows = np.concatenate([_row_ids(self), _row_ids(other)])
        cols = np.concatenate([self.col_idx, other.col_idx])
        vals = np.concatenate([self.values, other.values])
        return _from_coo(self.n_rows, self.n_cols, rows, cols, vals)


def _row_ids(m: CsrMatrix) -> np.ndarray:
    return np.repeat(np.arange(m.n_rows, dtype=np.int64), np.diff(m.row_ptr))


def _from_coo(n_rows, n_cols, rows, cols, vals) -> CsrMatrix:
    """Assemble CSR from coordinates, summing duplicates."""
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows):
        first = np.ones(len(rows), dtype=bool)
        first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(first)
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=row_ptr[1:])
    return CsrMatrix(n_rows, n_cols, row_ptr, cols.astype(np.int64), vals.astype(np.float64))


def build_operator(g: Graph, kind: "OperatorKind | str" = OperatorKind.ADJACENCY) -> CsrMatrix:
    """Symmetric aggregation operator: ``A``, ``D^-1/2 A D^-1/2`` or their sum.

    Degree-zero nodes get all-zero rows in every variant.
    """
    kind = OperatorKind.parse(kind)
    n = g.node_count
    u, v = g.edges[:, 0], g.edges[:, 1]
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    ones = np.ones(len(rows))
    if kind is OperatorKind.ADJACENCY:
        vals = ones
    else:
        deg = g.degrees().astype(np.float64)
        inv_sqrt = np.zeros(n)
        nz = deg > 0
        inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
        vals = inv_sqrt[rows] * inv_sqrt[cols]
        if kind is OperatorKind.NORMALIZED_PLUS_ADJACENCY:
            vals = vals + ones
    return _from_coo(n, n, rows, cols, vals)


@dataclass
class FeatureBank:
    """``matrices[r]`` holds the operator applied ``r`` times to the input features."""

    matrices: list = field(default_factory=list)

    @property
    def R(self) -> int:
        return len(self.matrices) - 1

    @property
    def node_count(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.matrices[0].shape[1]

    def stacked(self) -> np.ndarray:
        return np.stack(self.matrices)

    def astype(self, dtype) -> "FeatureBank":
        return FeatureBank([np.ascontiguousarray(m, dtype=dtype) for m in self.matrices])


def operator_bank(g: Graph, kind: "OperatorKind | str", R: int) -> FeatureBank:
    """Compute ``[X, A X, A^2 X, ..., A^R X]`` by repeated sparse products."""
    if R < 0:
        raise ValueError("R must be >= 0")
    op = build_operator(g, kind)
    mats = [np.array(g.features, dtype=np.float64, copy=True)]
    for _ in range(R):
        mats.append(op.matmul(mats[-1]))
    return FeatureBank(mats)


def degree_feature(g: Graph, max_degree: int) -> np.ndarray:
    """One-hot degree encoding over ``max_degree + 1`` bins; larger degrees clamp."""
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")
    deg = np.minimum(g.degrees(), max_degree)
    out = np.zeros((g.node_count, max_degree + 1))
    out[np.arange(g.node_count), deg] = 1.0
    return out


# --- edge-list text format -------------------------------------------------

def read_edgelist(path) -> Graph:
    """Read ``N M`` followed by ``M`` lines ``u v`` (0-indexed)."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 2:
        raise ValueError(f"{path}: first line must be 'N M'")
    n, m = int(lines[0][0]), int(lines[0][1])
    body = lines[1:]
    if len(body) != m:
        raise ValueError(f"{path}: header declares {m} edges, found {len(body)}")
    edges = []
    for lineno, parts in enumerate(body, start=2):
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'u v'")
        u, v = int(parts[0]), int(parts[1])
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"{path}:{lineno}: endpoint outside [0, {n})")
        edges.append((u, v))
    return Graph(n, edges)


def write_edgelist(g: Graph, path) -> None:
    rows = [f"{g.node_count} {g.edge_count}"]
    rows += [f"{u} {v}" for u, v in g.edges.tolist()]
    Path(path).write_text("\n".join(rows) + "\n")


# --- small generators ------------------------------------------------------

def cycle_graph(n: int) -> Graph:
    return Graph(n, [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(0, 1)] if n == 2 else [])


def path_graph(n: int) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def complete_graph(n: int) -> Graph:
    return Graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def star_graph(leaves: int) -> Graph:
    """Center node 0 joined to ``leaves`` leaves."""
    return Graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def disjoint_union(*graphs: Graph) -> Graph:
    edges, feats, offset = [], [], 0
    for g in graphs:
        edges.append(g.edges + offset)
        feats.append(g.features)
        offset += g.node_count
    return Graph(offset, np.concatenate(edges) if edges else [], np.concatenate(feats))


def circulant_graph(n: int, k: int) -> Graph:
    """``k``-regular circulant graph on ``n`` nodes.

    Connection set ``{1, ..., k//2}``, plus the antipodal offset ``n/2`` when
    ``k`` is odd.
    """
    if k < 0 or k >= n:
        raise ValueError(f"no {k}-regular graph on {n} nodes")
    if (n * k) % 2:
        raise ValueError(f"no {k}-regular graph on {n} nodes: n*k is odd")
    offsets = list(range(1, k // 2 + 1))
    if k % 2:
        offsets.append(n // 2)
    edges = [(i, (i + s) % n) for i in range(n) for s in offsets]
    g = Graph(n, edges)
    if not np.all(g.degrees() == k):
        raise ValueError(f"circulant construction failed for n={n}, k={k}")
    return g


def erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Graph:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return Graph(n, np.stack([iu[keep], ju[keep]], axis=1))
