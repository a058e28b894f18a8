"""Pure-numpy intersection kernel, same contract as the numba backend."""

from __future__ import annotations

import numpy as np


def matches_one_order(hdata, hoffsets, rdata, roffsets):
    m = len(hoffsets) - 1
    n = len(roffsets) - 1
    out = np.zeros((m, n), dtype=np.int64)
    if len(hdata) == 0 or len(rdata) == 0:
        return out
    # dense count matrices over the vocabulary of packed n-grams
    uniq, inverse = np.unique(np.concatenate([hdata, rdata]), return_inverse=True)
    u = len(uniq)
    hrows = np.repeat(np.arange(m), np.diff(hoffsets))
    rrows = np.repeat(np.arange(n), np.diff(roffsets))
    hcounts = np.zeros((m, u), dtype=np.int64)
    rcounts = np.zeros((n, u), dtype=np.int64)
    np.add.at(hcounts, (hrows, inverse[: len(hdata)]), 1)
    np.add.at(rcounts, (rrows, inverse[len(hdata) :]), 1)
    for i in range(m):
        out[i] = np.minimum(hcounts[i], rcounts).sum(axis=1)
    return out
