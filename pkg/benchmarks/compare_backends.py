"""Compare the compiled graph kernel against the pure-Python fallback.

Builds the same index twice, once per backend, from one shared corpus and
random seed, then times construction and a batch of queries. Because the
level draws and neighbor selection are deterministic, the two builds must
produce identical graphs; the script verifies that before timing, so a
speed difference is the only difference.

Run from the repository root:

    python3 benchmarks/compare_backends.py
    python3 benchmarks/compare_backends.py --count 10000 --efc 200
"""

import argparse
import sys
import time

import numpy as np

from facepipe import Embedding, HnswIndex, HnswParams
from facepipe._kernels import load_backend


def build_corpus(rng, count, dim):
    vecs = rng.normal(size=(count, dim))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs.astype(np.float32)


def run_backend(backend, vecs, queries, args):
    params = HnswParams(m=args.m, ef_construction=args.efc, rng_seed=args.seed)
    started = time.perf_counter()
    index = HnswIndex(
        dimension=vecs.shape[1], params=params, capacity=len(vecs), backend=backend
    )
    for i, row in enumerate(vecs):
        index.insert(Embedding(values=row, id=i))
    build_s = time.perf_counter() - started

    started = time.perf_counter()
    for q in queries:
        index.knn_search(q, args.k, ef=args.ef)
    query_s = time.perf_counter() - started
    return index, build_s, query_s


def graphs_identical(a, b):
    for node in a.ids():
        if a.level_of(node) != b.level_of(node):
            return False
        for layer in range(a.level_of(node) + 1):
            if a.neighbors(node, layer) != b.neighbors(node, layer):
                return False
    return True


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--count", type=int, default=2000, help="corpus size")
    parser.add_argument("--dim", type=int, default=64, help="vector dimension")
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("-k", type=int, default=10)
    parser.add_argument("--ef", type=int, default=64, help="query beam width")
    parser.add_argument("--m", type=int, default=16)
    parser.add_argument("--efc", type=int, default=100, help="construction beam width")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        load_backend("cython")
    except ImportError:
        print("compiled kernel not built; run `python3 setup.py build_ext --inplace`",
              file=sys.stderr)
        return 1

    rng = np.random.Generator(np.random.PCG64(args.seed))
    vecs = build_corpus(rng, args.count, args.dim)
    queries = build_corpus(rng, args.queries, args.dim)
    print(
        f"corpus {args.count}x{args.dim}, m={args.m}, efc={args.efc}, "
        f"{args.queries} queries at k={args.k}, ef={args.ef}"
    )

    results = {}
    for backend in ("cython", "python"):
        index, build_s, query_s = run_backend(backend, vecs, queries, args)
        results[backend] = (index, build_s, query_s)
        per_query_us = query_s / args.queries * 1e6
        print(
            f"{backend:>7}: build {build_s:8.3f}s   "
            f"queries {query_s:7.3f}s ({per_query_us:8.1f} us/query)"
        )

    same = graphs_identical(results["cython"][0], results["python"][0])
    print(f"graphs identical across backends: {same}")
    build_ratio = results["python"][1] / results["cython"][1]
    query_ratio = results["python"][2] / results["cython"][2]
    print(f"compiled speedup: build {build_ratio:.1f}x, query {query_ratio:.1f}x")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
