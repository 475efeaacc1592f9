"""Time the compiled node2vec kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--nodes 500] [--repeat 3]

Both backends run on the same synthetic graph and the same seeds; the script
also checks that their walks are identical.
"""
import argparse
import time

import numpy as np

from tspe import _kernels
from tspe.graph import generate_synthetic
from tspe.node2vec import SkipGramConfig, WalkConfig, generate_walks, train_skipgram


def _best_of(fn, repeat):
    best, result = float("inf"), None
    for _ in range(repeat):
        start = time.process_time()
        result = fn()
        best = min(best, time.process_time() - start)
    return best, result


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--walk-length", type=int, default=40)
    ap.add_argument("--dim", type=int, default=32)
    args = ap.parse_args()

    if _kernels._ext is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . "
                         "--no-build-isolation` first")

    graph, _, _ = generate_synthetic(num_nodes=args.nodes, seed=0)
    cases = {
        "walks p=q=1": WalkConfig(walk_length=args.walk_length, walks_per_node=2, seed=1),
        "walks p=0.5 q=2": WalkConfig(p=0.5, q=2.0, walk_length=args.walk_length,
                                      walks_per_node=2, seed=1),
    }
    print(f"graph: {graph.num_nodes} nodes, {graph.num_edges} edges")
    print(f"{'kernel':<18} {'compiled s':>11} {'python s':>10} {'speedup':>8}")
    walks = None
    for label, cfg in cases.items():
        tc, a = _best_of(lambda: generate_walks(graph, cfg, "compiled"), args.repeat)
        tp, b = _best_of(lambda: generate_walks(graph, cfg, "python"), args.repeat)
        if not np.array_equal(a.flat, b.flat):
            raise SystemExit(f"{label}: backends disagree")
        print(f"{label:<18} {tc:11.4f} {tp:10.4f} {tp / tc:7.1f}x")
        walks = a

    sg = SkipGramConfig(dim=args.dim, epochs=1, seed=2)
    tc, a = _best_of(lambda: train_skipgram(walks, sg, graph.num_nodes, "compiled"), args.repeat)
    tp, b = _best_of(lambda: train_skipgram(walks, sg, graph.num_nodes, "python"), 1)
    gap = float(np.abs(a.matrix - b.matrix).max())
    print(f"{'skip-gram epoch':<18} {tc:11.4f} {tp:10.4f} {tp / tc:7.1f}x"
          f"   (max |diff| {gap:.1e})")


if __name__ == "__main__":
    main()
