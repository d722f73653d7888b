#!/usr/bin/env python3
"""Compare the compiled metric cursor against the pure-Python twin.

Builds a skewed synthetic interaction stream, answers the same evidence
queries with both backends, verifies they agree, and reports best-of-N
wall times. Run after any cursor change:

    python3 benchmarks/bench_cursor.py --edges 20000 --queries 4000
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from dytag import fixtures  # noqa: E402
from dytag.metrics import CompiledCursor, batch_evidence  # noqa: E402
from dytag.seeding import rng_for  # noqa: E402


def build_queries(store, count: int, seed: int):
    rng = rng_for(seed, "bench-queries")
    nodes = store.all_node_ids()
    picks = rng.integers(0, len(nodes), size=(count, 2))
    times = rng.uniform(float(store.ts[0]), float(store.ts[-1]) + 1.0,
                        size=count)
    times.sort()
    return [(nodes[int(a)], nodes[int(b)], float(t))
            for (a, b), t in zip(picks, times)]


def best_of(repeat: int, fn):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--edges", type=int, default=20000)
    parser.add_argument("--nodes", type=int, default=2000)
    parser.add_argument("--queries", type=int, default=4000)
    parser.add_argument("--seed", type=int, default=3)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    store = fixtures.zipf_store(args.seed, n_nodes=args.nodes,
                                n_edges=args.edges)
    queries = build_queries(store, args.queries, args.seed)

    python_out = batch_evidence(store, queries, force_python=True)
    if CompiledCursor is None:
        print("compiled cursor unavailable; nothing to compare")
        return 0
    compiled_out = batch_evidence(store, queries, force_python=False)
    if python_out != compiled_out:
        print("BACKENDS DISAGREE", file=sys.stderr)
        return 1

    t_python = best_of(args.repeat,
                       lambda: batch_evidence(store, queries, force_python=True))
    t_compiled = best_of(args.repeat,
                         lambda: batch_evidence(store, queries,
                                                force_python=False))
    rate_p = len(queries) / t_python
    rate_c = len(queries) / t_compiled
    print(f"stream: {store.num_edges} edges, {store.num_nodes} nodes, "
          f"{len(queries)} queries, best of {args.repeat}")
    print(f"{'backend':<10} {'seconds':>10} {'queries/s':>12}")
    print(f"{'python':<10} {t_python:>10.4f} {rate_p:>12.0f}")
    print(f"{'cython':<10} {t_compiled:>10.4f} {rate_c:>12.0f}")
    print(f"speedup: {t_python / t_compiled:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
