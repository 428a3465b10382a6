"""Pure-Python edit distance, used when the compiled extension is missing.

Same signatures and results as ``inflex._levenshtein``.
"""
import numpy as np

GAP = -1


def _codes(x):
    return [int(c) for c in x]


def distance(a, b):
    a, b = _codes(a), _codes(b)
    row = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        diag, row[0] = row[0], i
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            up = row[j]
            row[j] = min(diag + (ai != b[j - 1]), up + 1, row[j - 1] + 1)
            diag = up
    return row[-1]


def cost_matrix(a, b):
    a, b = _codes(a), _codes(b)
    n, m = len(a), len(b)
    d = np.empty((n + 1, m + 1), dtype=np.intc)
    d[0, :] = np.arange(m + 1)
    d[:, 0] = np.arange(n + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i, j] = min(d[i - 1, j - 1] + (a[i - 1] != b[j - 1]), d[i - 1, j] + 1, d[i, j - 1] + 1)
    return d


def alignment(a, b):
    a, b = _codes(a), _codes(b)
    d = cost_matrix(a, b)
    i, j = len(a), len(b)
    pairs = []
    while i > 0 or j > 0:
        if i > 0 and j > 0 and a[i - 1] == b[j - 1] and d[i, j] == d[i - 1, j - 1]:
            i, j = i - 1, j - 1
            pairs.append((i, j))
        elif i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + 1:
            i, j = i - 1, j - 1
            pairs.append((i, j))
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            i -= 1
            pairs.append((i, GAP))
        else:
            j -= 1
            pairs.append((GAP, j))
    pairs.reverse()
    return pairs, int(d[len(a), len(b)])


def cross_distance(a_codes, a_lens, b_codes, b_lens):
    a_codes, b_codes = np.atleast_2d(a_codes), np.atleast_2d(b_codes)
    if (len(a_lens) and max(a_lens) > a_codes.shape[1]) or (len(b_lens) and max(b_lens) > b_codes.shape[1]):
        raise ValueError("cross_distance: a length exceeds the padded width")
    out = np.empty((len(a_lens), len(b_lens)), dtype=np.int32)
    bs = [b_codes[q, :bl].tolist() for q, bl in enumerate(b_lens)]
    for p, al in enumerate(a_lens):
        a = a_codes[p, :al].tolist()
        for q, b in enumerate(bs):
            out[p, q] = distance(a, b)
    return out
