"""numba-compiled sorted-merge intersection kernel."""

from __future__ import annotations

import numpy as np
from numba import njit

JIT_OPTIONS = {"cache": True, "nogil": True}


@njit(**JIT_OPTIONS)
def _merge_count(data_a, lo_a, hi_a, data_b, lo_b, hi_b):
    # multiset intersection size of two sorted runs
    i, j, count = lo_a, lo_b, 0
    while i < hi_a and j < hi_b:
        va = data_a[i]
        vb = data_b[j]
        if va == vb:
            count += 1
            i += 1
            j += 1
        elif va < vb:
            i += 1
        else:
            j += 1
    return count


@njit(**JIT_OPTIONS)
def matches_one_order(hdata, hoffsets, rdata, roffsets):
    m = len(hoffsets) - 1
    n = len(roffsets) - 1
    out = np.zeros((m, n), dtype=np.int64)
    for i in range(m):
        for j in range(n):
            out[i, j] = _merge_count(
                hdata, hoffsets[i], hoffsets[i + 1], rdata, roffsets[j], roffsets[j + 1]
            )
    return out
