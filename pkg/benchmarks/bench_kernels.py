"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import math
import random
import timeit

import numpy as np

from tourmonitor import _pykernels
from tourmonitor.geo import flatten_rings

try:
    from tourmonitor import _ckernels
except ImportError:
    _ckernels = None


def polygon_case(n_points=20_000, n_vertices=64, seed=0):
    rng = random.Random(seed)
    angles = sorted(rng.uniform(0, 2 * math.pi) for _ in range(n_vertices))
    ring = [(math.cos(a) * rng.uniform(0.6, 1.0), math.sin(a) * rng.uniform(0.6, 1.0)) for a in angles]
    vx, vy, starts = flatten_rings([ring + [ring[0]]])
    prng = np.random.default_rng(seed)
    return prng.uniform(-1, 1, n_points), prng.uniform(-1, 1, n_points), vx, vy, starts


def tdm_case(n_docs=700, n_words=400, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.random((n_docs, n_words)) < 0.05).astype(np.uint8)


def bench(label, fn, repeat):
    best = min(timeit.repeat(fn, number=1, repeat=repeat))
    print(f"  {label:<8} {best * 1000:10.2f} ms")
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled backend not built; timing the fallback only")

    xs, ys, vx, vy, starts = polygon_case()
    print(f"points_in_rings: {len(xs)} points, {len(vx) - 1}-gon")
    t = {k: bench(k, lambda m=m: m.points_in_rings(xs, ys, vx, vy, starts), args.repeat)
         for k, m in backends.items()}
    if len(t) == 2:
        print(f"  speedup  {t['python'] / t['cython']:10.1f}x")

    m = tdm_case()
    print(f"phi_against: {m.shape[0]} docs x {m.shape[1]} words, 20 targets")
    t = {k: bench(k, lambda mod=mod: [mod.phi_against(m, j) for j in range(0, m.shape[1], 20)],
                  args.repeat) for k, mod in backends.items()}
    if len(t) == 2:
        print(f"  speedup  {t['python'] / t['cython']:10.1f}x")


if __name__ == "__main__":
    main()
