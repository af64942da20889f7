#!/usr/bin/env python3
"""Benchmark the compiled counting kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--pairs 20000] [--repeat 5]
"""

import argparse
import time

import numpy as np

from threadsum._kernels import _pure

try:
    from threadsum._kernels import _fast
except ImportError:
    _fast = None


def time_fn(fn, args_list, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for args in args_list:
            fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, default=20000, help="number of rouge-style scorings")
    parser.add_argument("--words", type=int, default=30000, help="distinct words for pair counting")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    vocab = [f"w{i}" for i in range(500)]

    rouge_work = []
    for _ in range(args.pairs):
        cand = [vocab[i] for i in rng.integers(0, 500, size=rng.integers(5, 40))]
        ref = [vocab[i] for i in rng.integers(0, 500, size=rng.integers(5, 60))]
        rouge_work.append((cand, ref, int(rng.integers(1, 3))))

    bpe_words = [
        tuple(vocab[i] for i in rng.integers(0, 500, size=rng.integers(2, 12)))
        for _ in range(args.words)
    ]
    bpe_freqs = [int(f) for f in rng.integers(1, 100, size=args.words)]
    bpe_work = [(bpe_words, bpe_freqs)]

    backends = [("pure", _pure)] + ([("cython", _fast)] if _fast else [])
    print(f"{'kernel':<16}{'backend':<10}{'best s':>10}{'speedup':>10}")
    for name, work in (("ngram_overlap", rouge_work), ("pair_counts", bpe_work)):
        base = None
        for label, mod in backends:
            took = time_fn(getattr(mod, name), work, args.repeat)
            base = base or took
            print(f"{name:<16}{label:<10}{took:>10.4f}{base / took:>9.2f}x")
    if _fast is None:
        print("\ncompiled backend unavailable; run `pip install -e .` with Cython to build it")


if __name__ == "__main__":
    main()
