"""Compare the compiled kernels against the NumPy fallback.

Usage:
    python benchmarks/bench_kernels.py [--sizes 4096,32768,151936] [--repeats 200]

Times every kernel on random logit vectors of each size and prints one table
per size with the per-call cost of both implementations and the speedup.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ccd import kernels


def time_call(fn, args, repeats: int) -> float:
    fn(*args)  # warm up caches and any lazy allocation
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def bench_size(size: int, repeats: int, rng: np.random.Generator) -> None:
    logits = rng.normal(0.0, 4.0, size=size)
    other = rng.normal(0.0, 4.0, size=size)
    k = min(20, size)
    cases = [
        ("logsumexp", lambda m: (m.logsumexp, (logits,))),
        ("softmax", lambda m: (m.softmax, (logits,))),
        ("log_softmax", lambda m: (m.log_softmax, (logits,))),
        ("token_confidence", lambda m: (m.token_confidence, (logits, k))),
        ("entropy", lambda m: (m.entropy, (logits,))),
        ("top_margin", lambda m: (m.top_margin, (logits,))),
        ("fuse", lambda m: (m.fuse, (logits, other, 0.5))),
        ("clamp", lambda m: (m.clamp, (logits, 1e4))),
    ]
    impls = kernels.implementations()
    print(f"\nvocab size {size} ({repeats} calls per cell)")
    header = f"{'kernel':<18}" + "".join(f"{name:>12}" for name in impls)
    if len(impls) > 1:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, pick in cases:
        per_impl = {}
        for name, mod in impls.items():
            fn, args = pick(mod)
            per_impl[name] = time_call(fn, args, repeats)
        row = f"{label:<18}" + "".join(
            f"{per_impl[name] * 1e6:>10.1f}us" for name in impls
        )
        if "pure" in per_impl and "fast" in per_impl:
            row += f"{per_impl['pure'] / per_impl['fast']:>9.2f}x"
        print(row)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--sizes",
        default="4096,32768,151936",
        help="comma-separated vocabulary sizes to benchmark",
    )
    parser.add_argument(
        "--repeats", type=int, default=200, help="timed calls per kernel"
    )
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    sizes = [int(s) for s in args.sizes.split(",") if s]
    impls = kernels.implementations()
    print(f"active implementation: {kernels.implementation()}")
    print(f"available: {', '.join(impls)}")
    if "fast" not in impls:
        print("compiled extension not built; timing the fallback only")
    rng = np.random.default_rng(args.seed)
    for size in sizes:
        bench_size(size, args.repeats, rng)


if __name__ == "__main__":
    main()
