"""Counting-kernel backend selection.

Imports the compiled Cython kernels when they were built, otherwise the
pure-Python fallbacks.  ``BACKEND`` names the active implementation;
``benchmarks/bench_kernels.py`` compares the two.
"""

try:
    from threadsum._kernels._fast import BACKEND, ngram_overlap, pair_counts
except ImportError:  # extension not built
    from threadsum._kernels._pure import BACKEND, ngram_overlap, pair_counts

__all__ = ["BACKEND", "ngram_overlap", "pair_counts"]
