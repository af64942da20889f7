# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled counting kernels; semantics identical to _pure."""

BACKEND = "cython"


def ngram_overlap(list cand, list ref, int n):
    """Clipped multiset n-gram overlap between two token lists."""
    cdef Py_ssize_t n_cand = len(cand) - n + 1
    cdef Py_ssize_t n_ref = len(ref) - n + 1
    if n_cand < 0:
        n_cand = 0
    if n_ref < 0:
        n_ref = 0
    if n_cand == 0 or n_ref == 0:
        return 0, n_cand, n_ref
    cdef dict ref_counts = {}
    cdef Py_ssize_t i
    cdef long overlap = 0
    cdef long left
    cdef tuple gram
    for i in range(n_ref):
        gram = tuple(ref[i : i + n])
        ref_counts[gram] = ref_counts.get(gram, 0) + 1
    for i in range(n_cand):
        gram = tuple(cand[i : i + n])
        left = ref_counts.get(gram, 0)
        if left > 0:
            overlap += 1
            ref_counts[gram] = left - 1
    return overlap, n_cand, n_ref


def pair_counts(list words, list freqs):
    """Count adjacent symbol pairs over a weighted word list."""
    cdef dict counts = {}
    cdef tuple symbols
    cdef tuple pair
    cdef Py_ssize_t i, w
    cdef long freq
    for w in range(len(words)):
        symbols = words[w]
        freq = freqs[w]
        for i in range(len(symbols) - 1):
            pair = (symbols[i], symbols[i + 1])
            counts[pair] = counts.get(pair, 0) + freq
    return counts
