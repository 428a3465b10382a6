# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled unit-cost edit distance and alignment.

Sequences are integer code arrays (codepoints).  Mirrors
``inflex._levenshtein_py`` function for function.  Every entry point runs
the same table fill, so the cost reported by an alignment and the distance
used for evaluation come from one routine.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

DEF GAP = -1


cdef int _fill(const int* a, int n, const int* b, int m, int* d, int stride, int j0) nogil:
    # d is a row-major table with row length ``stride`` >= m + 1.  Columns
    # 0..j0 must already hold the values for this ``a`` and ``b[:j0]``;
    # only columns j0+1..m are computed.
    cdef int i, j, cur, up, left
    cdef int* prev
    cdef int* row
    for j in range(j0, m + 1):
        d[j] = j
    for i in range(1, n + 1):
        prev = d + (i - 1) * stride
        row = d + i * stride
        row[0] = i
        left = row[j0]
        for j in range(j0 + 1, m + 1):
            cur = prev[j - 1] + (a[i - 1] != b[j - 1])
            up = prev[j] + 1
            if up < cur:
                cur = up
            if left + 1 < cur:
                cur = left + 1
            row[j] = cur
            left = cur
    return d[n * stride + m]


cdef int[::1] _as_codes(x):
    return np.ascontiguousarray(x, dtype=np.intc)


def cost_matrix(a, b):
    """Full (n+1) x (m+1) dynamic-programming table."""
    cdef int[::1] av = _as_codes(a)
    cdef int[::1] bv = _as_codes(b)
    cdef int n = av.shape[0], m = bv.shape[0]
    cdef int dummy = 0
    out = np.empty((n + 1, m + 1), dtype=np.intc)
    cdef int[:, ::1] d = out
    _fill(&av[0] if n else &dummy, n, &bv[0] if m else &dummy, m, &d[0, 0], m + 1, 0)
    return out


def distance(a, b):
    """Unit-cost Levenshtein distance between two code sequences."""
    return int(cost_matrix(a, b)[-1, -1])


def alignment(a, b):
    """Minimum-cost alignment as ``(pairs, cost)``.

    Traceback from the end prefers match, then substitution, deletion
    (lemma side against a gap), insertion.  Gaps are ``-1``.
    """
    cdef int[::1] av = _as_codes(a)
    cdef int[::1] bv = _as_codes(b)
    table = cost_matrix(av, bv)
    cdef int[:, ::1] d = table
    cdef int i = av.shape[0], j = bv.shape[0]
    pairs = []
    while i > 0 or j > 0:
        if i > 0 and j > 0 and av[i - 1] == bv[j - 1] and d[i, j] == d[i - 1, j - 1]:
            i -= 1
            j -= 1
            pairs.append((i, j))
        elif i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + 1:
            i -= 1
            j -= 1
            pairs.append((i, j))
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            i -= 1
            pairs.append((i, GAP))
        else:
            j -= 1
            pairs.append((GAP, j))
    pairs.reverse()
    return pairs, int(d[av.shape[0], bv.shape[0]])


def cross_distance(a_codes, a_lens, b_codes, b_lens):
    """All-pairs distances between two padded batches of sequences.

    ``a_codes`` is (P, La) with valid lengths ``a_lens``; likewise for b.
    Returns an int32 (P, Q) matrix.  Table columns for a prefix shared with
    the previous row of ``b_codes`` are reused, so sorted batches are cheap.
    """
    cdef int[:, ::1] A = np.ascontiguousarray(a_codes, dtype=np.intc)
    cdef int[::1] AL = _as_codes(a_lens)
    cdef int[:, ::1] B = np.ascontiguousarray(b_codes, dtype=np.intc)
    cdef int[::1] BL = _as_codes(b_lens)
    cdef Py_ssize_t P = A.shape[0], Q = B.shape[0], p, q
    cdef int stride = B.shape[1] + 1, shared, limit
    if (P and max(AL) > A.shape[1]) or (Q and max(BL) > B.shape[1]):
        raise ValueError("cross_distance: a length exceeds the padded width")
    out = np.empty((P, Q), dtype=np.int32)
    cdef int[:, ::1] o = out
    cdef int* table = <int*> malloc((A.shape[1] + 1) * stride * sizeof(int))
    cdef int dummy = 0
    cdef const int* bq
    try:
        with nogil:
            for p in range(P):
                for q in range(Q):
                    bq = &B[q, 0] if B.shape[1] else &dummy
                    shared = 0
                    if q > 0:
                        limit = BL[q] if BL[q] < BL[q - 1] else BL[q - 1]
                        while shared < limit and B[q, shared] == B[q - 1, shared]:
                            shared += 1
                    o[p, q] = _fill(&A[p, 0] if A.shape[1] else &dummy, AL[p], bq, BL[q], table, stride, shared)
    finally:
        free(table)
    return out
