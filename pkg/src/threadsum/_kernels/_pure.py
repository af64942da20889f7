"""Pure-Python counting kernels.

Reference implementations of the two inner loops that dominate corpus-scale
work: clipped n-gram overlap (ROUGE) and adjacent-pair counting (byte-pair
merge training).  threadsum._kernels swaps these for the compiled versions
when the extension is available; both backends must return identical values.
"""

from __future__ import annotations

BACKEND = "pure"


def ngram_overlap(cand: list[str], ref: list[str], n: int) -> tuple[int, int, int]:
    """Clipped multiset n-gram overlap between two token lists.

    Returns (overlap, candidate n-gram count, reference n-gram count).
    """
    n_cand = max(len(cand) - n + 1, 0)
    n_ref = max(len(ref) - n + 1, 0)
    if n_cand == 0 or n_ref == 0:
        return 0, n_cand, n_ref
    ref_counts: dict[tuple[str, ...], int] = {}
    for i in range(n_ref):
        gram = tuple(ref[i : i + n])
        ref_counts[gram] = ref_counts.get(gram, 0) + 1
    overlap = 0
    for i in range(n_cand):
        gram = tuple(cand[i : i + n])
        left = ref_counts.get(gram, 0)
        if left > 0:
            overlap += 1
            ref_counts[gram] = left - 1
    return overlap, n_cand, n_ref


def pair_counts(words: list[tuple[str, ...]], freqs: list[int]) -> dict[tuple[str, str], int]:
    """Count adjacent symbol pairs over a weighted word list."""
    counts: dict[tuple[str, str], int] = {}
    for symbols, freq in zip(words, freqs):
        for i in range(len(symbols) - 1):
            pair = (symbols[i], symbols[i + 1])
            counts[pair] = counts.get(pair, 0) + freq
    return counts
