"""Time the compiled kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Cases cover the toy profile (T_base=12) and the full-size geometry
(T_base=48, t_s in {24, 12}) with a small feature width.
"""
import argparse
import timeit

import numpy as np

from tilefuse._kernels import _pykernels

try:
    from tilefuse._kernels import _ckernels
except ImportError:
    _ckernels = None


def ola_case(T, t, d, seed=0):
    rng = np.random.default_rng(seed)
    tau = t // 2
    starts = np.array([(r, c) for r in range(0, T - t + 1, tau) for c in range(0, T - t + 1, tau)],
                      dtype=np.int64)
    feats = rng.normal(size=(len(starts), t, t, d))
    weights = rng.random((t, t)) + 0.1

    def call(mod):
        num, den = np.zeros((T, T, d)), np.zeros((T, T))
        lo, hi = np.full((T, T, d), np.inf), np.full((T, T, d), -np.inf)
        mod.ola_accumulate(num, den, lo, hi, feats, starts, weights)

    return f"ola T={T} t={t} d={d} ({len(starts)} windows)", call


def resize_case(h, w, out_h, out_w, c=3, seed=0):
    img = np.random.default_rng(seed).random((h, w, c))
    return f"resize {h}x{w}x{c} -> {out_h}x{out_w}", lambda mod: mod.bilinear_resize(img, out_h, out_w)


CASES = [
    ola_case(12, 2, 16),
    ola_case(12, 4, 16),
    ola_case(48, 12, 32),
    ola_case(48, 24, 32),
    resize_case(128, 128, 96, 96),
    resize_case(168, 168, 32, 32),
    resize_case(512, 512, 672, 672),
]


def best_of(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled kernels not built; only the fallback is timed")
    print(f"{'case':44s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, call in CASES:
        py = best_of(lambda: call(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:44s} {py * 1e3:10.3f} {'-':>10s} {'-':>8s}")
            continue
        cy = best_of(lambda: call(_ckernels), args.repeat)
        print(f"{name:44s} {py * 1e3:10.3f} {cy * 1e3:10.3f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
