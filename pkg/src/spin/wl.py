"""One-dimensional Weisfeiler-Lehman refinement and an exact small-graph isomorphism check.

Colors are canonicalized through a sorted table of structural signatures
rather than hashed, so two nodes share a color iff their signatures are equal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from spin.graph import Graph

BRUTE_FORCE_MAX_NODES = 10


@dataclass
class ColorAssignment:
    colors: np.ndarray
    iteration: int = 0

    @property
    def num_colors(self) -> int:
        return int(len(np.unique(self.colors)))


@dataclass(frozen=True)
class WlVerdict:
    distinguished: bool
    iteration: Optional[int] = None

    @classmethod
    def possibly_isomorphic(cls) -> "WlVerdict":
        return cls(False, None)

    def __str__(self) -> str:
        if self.distinguished:
            return f"Distinguished({self.iteration})"
        return "PossiblyIsomorphic"


def _canonical(signatures: list) -> list[np.ndarray]:
    """Map a list of per-graph signature lists onto dense joint color ids."""
    table = {sig: i for i, sig in enumerate(sorted({s for sigs in signatures for s in sigs}))}
    return [np.array([table[s] for s in sigs], dtype=np.int64) for sigs in signatures]


def _init_signatures(g: Graph, use_features: bool) -> list:
    if not use_features:
        return [0] * g.node_count
    feats = np.asarray(g.features, dtype=np.float64)
    if not np.all(np.isfinite(feats)):
        raise ValueError("feature rows must be finite for WL initialization")
    return [tuple(row) for row in feats.tolist()]


def _step_signatures(adj: list[list[int]], colors: np.ndarray) -> list:
    c = colors.tolist()
    return [(c[v], tuple(sorted(c[u] for u in adj[v]))) for v in range(len(adj))]


def wl_init(g: Graph, use_features: bool = True) -> ColorAssignment:
    (colors,) = _canonical([_init_signatures(g, use_features)])
    return ColorAssignment(colors, 0)


def wl_step(g: Graph, c: ColorAssignment) -> ColorAssignment:
    if len(c.colors) != g.node_count:
        raise ValueError("color array length differs from node count")
    (colors,) = _canonical([_step_signatures(g.neighbors(), c.colors)])
    return ColorAssignment(colors, c.iteration + 1)


def wl_refine(g: Graph, iterations: Optional[int] = None, use_features: bool = True) -> list[ColorAssignment]:
    """Run refinement until the partition is stable (or ``iterations`` steps)."""
    history = [wl_init(g, use_features)]
    limit = g.node_count if iterations is None else iterations
    adj = g.neighbors()
    for _ in range(limit):
        prev = history[-1]
        (colors,) = _canonical([_step_signatures(adj, prev.colors)])
        history.append(ColorAssignment(colors, prev.iteration + 1))
        if iterations is None and history[-1].num_colors == prev.num_colors:
            break
    return history


def _histograms_differ(c1: np.ndarray, c2: np.ndarray) -> bool:
    size = int(max(c1.max(initial=-1), c2.max(initial=-1))) + 1
    return not np.array_equal(np.bincount(c1, minlength=size), np.bincount(c2, minlength=size))


def wl_distinguish(
    g1: Graph,
    g2: Graph,
    max_iters: Optional[int] = None,
    use_features: bool = True,
) -> WlVerdict:
    """Joint 1-WL test.

    Both graphs share one signature table per iteration, so color ids are
    comparable across them. Returns the first iteration at which the color
    histograms differ, or ``PossiblyIsomorphic`` once the joint partition
    stops refining with equal histograms.
    """
    if max_iters is None:
        max_iters = max(g1.node_count, g2.node_count)
    if g1.node_count != g2.node_count:
        return WlVerdict(True, 0)
    adj1, adj2 = g1.neighbors(), g2.neighbors()
    c1, c2 = _canonical([_init_signatures(g1, use_features), _init_signatures(g2, use_features)])
    if _histograms_differ(c1, c2):
        return WlVerdict(True, 0)
    n_colors = len(np.unique(np.concatenate([c1, c2])))
    for t in range(1, max_iters + 1):
        c1, c2 = _canonical([_step_signatures(adj1, c1), _step_signatures(adj2, c2)])
        if _histograms_differ(c1, c2):
            return WlVerdict(True, t)
        refined = len(np.unique(np.concatenate([c1, c2])))
        if refined == n_colors:
            break
        n_colors = refined
    return WlVerdict.possibly_isomorphic()


def brute_force_isomorphic(g1: Graph, g2: Graph, max_nodes: int = BRUTE_FORCE_MAX_NODES) -> bool:
    """Exact isomorphism by backtracking over node bijections.

    Candidates are pruned only by conditions every isomorphism must satisfy
    (equal degree, equal feature row, consistent adjacency with the partial
    map), so the search is exhaustive.
    """
    n = g1.node_count
    if n > max_nodes or g2.node_count > max_nodes:
        raise ValueError(f"brute-force isomorphism limited to {max_nodes} nodes")
    if n != g2.node_count or g1.edge_count != g2.edge_count:
        return False
    if g1.feature_dim != g2.feature_dim:
        return False
    f1 = [tuple(r) for r in g1.features.tolist()]
    f2 = [tuple(r) for r in g2.features.tolist()]
    if sorted(f1) != sorted(f2):
        return False
    a1 = np.zeros((n, n), dtype=bool)
    a2 = np.zeros((n, n), dtype=bool)
    for a, g in ((a1, g1), (a2, g2)):
        if g.edge_count:
            a[g.edges[:, 0], g.edges[:, 1]] = True
            a[g.edges[:, 1], g.edges[:, 0]] = True
    d1, d2 = a1.sum(1), a2.sum(1)
    if sorted(d1.tolist()) != sorted(d2.tolist()):
        return False
    a1l, a2l = a1.tolist(), a2.tolist()
    order = sorted(range(n), key=lambda v: -d1[v])
    mapping = [-1] * n
    used = [False] * n

    def extend(depth: int) -> bool:
        if depth == n:
            return True
        v = order[depth]
        for w in range(n):
            if used[w] or d2[w] != d1[v] or f2[w] != f1[v]:
                continue
            if all(a1l[v][u] == a2l[w][mapping[u]] for u in order[:depth]):
                mapping[v] = w
                used[w] = True
                if extend(depth + 1):
                    return True
                used[w] = False
                mapping[v] = -1
        return False

    return extend(0)

