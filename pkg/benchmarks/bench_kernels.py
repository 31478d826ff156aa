"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--items 20000] [--repeats 5]

Each kernel is timed on identical inputs under both backends (best of
``--repeats``) and the largest output difference is shown. A last row times a
full SIS query pass in a subprocess per backend, so the import-time selection
is exercised as a user would see it.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from sisindex import kernels

END_TO_END = """
import time
from sisindex import index as sis, kernels
from sisindex.datagen import GenConfig, generate
from sisindex.retrieval import DenseScorer, rank_scope
ds = generate(GenConfig(seed=42, n_items={items}, n_queries=100))
idx = sis.build_from_matrix(ds.db_ids, ds.db_big(), 5)
scorer = DenseScorer("l2")
best = float("inf")
for _ in range({repeats}):
    t = time.perf_counter()
    for j, p in enumerate(ds.query_big()):
        rank_scope(ds.query_record(j), sis.select_scope(p, 5, idx), ds.db_features, scorer, top_k=None)
    best = min(best, time.perf_counter() - t)
print(kernels.BACKEND, best)
"""


def cases(n, rng):
    dim = 32
    X = rng.standard_normal((n, dim))
    q = rng.standard_normal(dim)
    idx = np.sort(rng.choice(n, n // 2, replace=False)).astype(np.int64)
    norms = np.sqrt((X * X).sum(axis=1))

    counts = rng.integers(5, 51, 1000)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    P = rng.standard_normal((int(offsets[-1]), 16))
    Q = rng.standard_normal((30, 16))
    kidx = np.arange(1000, dtype=np.int64)

    nb, alpha = 50, 5
    blocks_of = np.argsort(-rng.random((n, nb)), axis=1)[:, :alpha]
    block = blocks_of.ravel()
    pos = np.repeat(np.arange(n, dtype=np.int64), alpha)
    conf = rng.random(n * alpha)
    order = np.lexsort((pos, -conf, block))
    post_pos, post_conf = pos[order], conf[order]
    block_off = np.searchsorted(block[order], np.arange(nb + 1)).astype(np.int64)
    sel = np.arange(5, dtype=np.int64)
    qconf = rng.random(5)

    C = rng.standard_normal((100, dim))
    return {
        "l2_rows": lambda k: k.l2_rows(X, q, idx),
        "cosine_rows": lambda k: k.cosine_rows(X, norms, q, float(np.sqrt(q @ q)), idx),
        "keypoint_counts": lambda k: k.keypoint_counts(Q, P, offsets, kidx, 0.8),
        "union_blocks": lambda k: k.union_blocks(post_pos, post_conf, block_off, sel, qconf, n),
        "nearest_centroid": lambda k: k.nearest_centroid(X, C),
    }


def max_diff(a, b):
    """Largest absolute output difference; distances differ in the last bits
    because numpy sums pairwise while the compiled loop sums sequentially."""
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--items", type=int, default=20000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)

    found = kernels.backends()
    if "cython" not in found:
        print("compiled extension not built; only the numpy fallback is available")
    names = list(found)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}" + "".join(f"{n + ' ms':>14}" for n in names) + f"{'speedup':>10}{'max|diff|':>11}")
    for label, fn in cases(args.items, rng).items():
        ms = {}
        outs = {}
        for name, mod in found.items():
            outs[name] = fn(mod)
            ms[name] = 1e3 * min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeats))
        speed = ms["python"] / ms["cython"] if "cython" in ms else float("nan")
        diff = max_diff(*outs.values()) if len(outs) > 1 else 0.0
        print(f"{label:<18}" + "".join(f"{ms[n]:>14.3f}" for n in names) + f"{speed:>10.2f}{diff:>11.1e}")

    if args.skip_end_to_end:
        return 0
    code = END_TO_END.format(items=args.items, repeats=min(args.repeats, 3))
    e2e = {}
    for name in names:
        env = dict(os.environ)
        env.pop("SISINDEX_PURE_PYTHON", None)
        if name == "python":
            env["SISINDEX_PURE_PYTHON"] = "1"
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        e2e[backend] = 1e3 * float(secs)
    speed = e2e["python"] / e2e["cython"] if "cython" in e2e else float("nan")
    print(f"{'query pass (100q)':<18}" + "".join(f"{e2e[n]:>14.3f}" for n in names) + f"{speed:>10.2f}{'-':>11}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
