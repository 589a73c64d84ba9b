"""Timing of training epochs on synthetic graphs of varying edge density."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from spin.data import Dataset, precompute_dataset
from spin.graph import erdos_renyi
from spin.model import GraphSet, SpinConfig, SpinParams
from spin.nn import AdamState, adam_step, make_rng
from spin.training import loss_and_grads


@dataclass
class BenchRow:
    density: float
    R: int
    edges: int
    precompute_seconds: float
    epoch_seconds: list

    @property
    def median_epoch(self) -> float:
        return statistics.median(self.epoch_seconds)


def synthetic_dataset(N: int, d: int, density: float, graphs: int, seed: int) -> Dataset:
    rng = make_rng(seed, int(density * 1e6))
    out = []
    for i in range(graphs):
        g = erdos_renyi(N, density, rng)
        out.append(g.with_features(rng.normal(size=(N, d))))
        out[-1].label = i % 2
    return Dataset(out, 2, f"er-{density}")


def time_epochs(train: GraphSet, config: SpinConfig, epochs: int, batch_size: int, seed: int) -> list:
    """Wall time of ``epochs`` training epochs, after one untimed warm-up epoch."""
    params = SpinParams.init(config, make_rng(seed, 1))
    arrays = params.arrays()
    state = AdamState.for_arrays(arrays)
    order_rng = make_rng(seed, 2)
    batches = None
    times = []
    for epoch in range(epochs + 1):
        order = order_rng.permutation(len(train))
        batches = [train.subset(order[s:s + batch_size]) for s in range(0, len(train), batch_size)]
        start = time.perf_counter()
        for batch in batches:
            _, grads, _ = loss_and_grads(params, config, batch, training=True)
            adam_step(arrays, grads.arrays(), state, 1e-3)
        if epoch:
            times.append(time.perf_counter() - start)
    return times


def bench_edge_independence(
    N: int = 200,
    d: int = 16,
    R: int = 3,
    densities: Sequence[float] = (0.05, 0.5),
    epochs: int = 5,
    graphs: int = 32,
    batch_size: int = 8,
    hidden_dim: int = 16,
    seed: int = 0,
) -> list:
    """Per-density precompute time and training epoch times (precompute excluded)."""
    rows = []
    for density in densities:
        ds = synthetic_dataset(N, d, density, graphs, seed)
        t0 = time.perf_counter()
        pgs = precompute_dataset(ds, "adjacency", R)
        pre = time.perf_counter() - t0
        train = GraphSet.from_graphs(pgs)
        config = SpinConfig(input_dim=d, R=R, hidden_dim=hidden_dim, attention=True)
        times = time_epochs(train, config, epochs, batch_size, seed)
        edges = int(np.mean([g.edge_count for g in ds.graphs]))
        rows.append(BenchRow(density, R, edges, pre, times))
    return rows


def density_ratio(rows: Sequence[BenchRow]) -> float:
    """Median epoch time at the densest setting over the sparsest."""
    dense = max(rows, key=lambda r: r.density)
    sparse = min(rows, key=lambda r: r.density)
    return dense.median_epoch / sparse.median_epoch


def rows_to_csv(rows: Sequence[BenchRow]) -> str:
    out = ["density,R,mean_edges,precompute_seconds,epoch,epoch_seconds"]
    for r in rows:
        for i, t in enumerate(r.epoch_seconds, 1):
            out.append(f"{r.density:g},{r.R},{r.edges},{r.precompute_seconds:.6f},{i},{t:.6f}")
    return "\n".join(out) + "\n"
