"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--graphs 256] [--nodes 60] [--dim 32] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from spin.graph import build_operator, erdos_renyi
from spin.kernels import implementation
from spin.nn import make_rng


def workload(graphs, nodes, dim, seed=0):
    rng = make_rng(seed)
    g = erdos_renyi(graphs * nodes // 8, 0.05, rng)
    A = build_operator(g, "normalized")
    x = rng.normal(size=(g.node_count, dim))
    sizes = rng.integers(nodes // 2, nodes * 3 // 2, size=graphs)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    z = rng.normal(size=(offsets[-1], dim))
    scores = rng.normal(size=offsets[-1])
    return A, x, z, scores, offsets


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--graphs", type=int, default=256)
    ap.add_argument("--nodes", type=int, default=60)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    A, x, z, scores, offsets = workload(args.graphs, args.nodes, args.dim)
    alpha = implementation("python").segment_softmax(scores, offsets)
    cases = {
        "csr_spmm": lambda k: k.csr_spmm(A.row_ptr, A.col_idx, A.values, x),
        "segment_sum": lambda k: k.segment_sum(z, offsets),
        "segment_weighted_sum": lambda k: k.segment_weighted_sum(z, alpha, offsets),
        "segment_max": lambda k: k.segment_max(z, offsets),
        "segment_softmax": lambda k: k.segment_softmax(scores, offsets),
        "segment_softmax_backward": lambda k: k.segment_softmax_backward(alpha, scores, offsets),
    }
    try:
        compiled = implementation("compiled")
    except ImportError:
        print("compiled kernels are not built; nothing to compare")
        return 1
    python = implementation("python")
    print(f"{'kernel':<26}{'python ms':>12}{'compiled ms':>13}{'speedup':>9}")
    for name, fn in cases.items():
        t_py = min(timeit.repeat(lambda: fn(python), number=1, repeat=args.repeat)) * 1e3
        t_c = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<26}{t_py:>12.3f}{t_c:>13.3f}{t_py / t_c:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
