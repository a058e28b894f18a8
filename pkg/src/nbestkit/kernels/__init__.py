"""Pairwise n-gram match kernels behind a switchable backend.

The MBR utility matrix needs clipped n-gram matches for every
(hypothesis, pseudo-reference) pair: O(N^2) multiset intersections per
segment, the dominant cost of builtin-metric MBR.  Sequences are
mapped to dense symbol ids, each n-gram packed into one int64, and the
per-pair intersections run either as a numba-compiled sorted merge or
as a pure-numpy count-matrix reduction.

Select the backend with the ``NBESTKIT_BACKEND`` environment variable:
``auto`` (default: numba when importable), ``numba``, or ``numpy``.
Both backends return identical integer matrices; metric composition
happens outside the kernels so scores are bit-identical across
backends and with the scalar metric functions.
"""

from __future__ import annotations

import os
from collections import Counter

import numpy as np

from ..errors import ValidationError

BACKEND_ENV = "NBESTKIT_BACKEND"

TOKEN_BITS = 15  # up to 32768 distinct tokens per call
CHAR_BITS = 10  # up to 1024 distinct characters per call


def resolve_backend(name: str | None = None) -> str:
    """The backend to use: explicit argument, else env var, else auto."""
    if name is None:
        name = os.environ.get(BACKEND_ENV, "auto").lower()
    if name not in ("auto", "numba", "numpy"):
        raise ValidationError(f"unknown backend {name!r}")
    if name == "numpy":
        return "numpy"
    try:
        from . import numba_backend  # noqa: F401

        return "numba"
    except ImportError:
        if name == "numba":
            raise ValidationError(
                "backend 'numba' requested but numba is not importable"
            ) from None
        return "numpy"


def _backend_module(backend: str | None):
    resolved = resolve_backend(backend)
    if resolved == "numba":
        from . import numba_backend as mod
    else:
        from . import numpy_backend as mod
    return mod


def _symbol_ids(seqs, table: dict) -> list[np.ndarray]:
    out = []
    for seq in seqs:
        ids = np.empty(len(seq), dtype=np.int64)
        for i, sym in enumerate(seq):
            idx = table.get(sym)
            if idx is None:
                idx = len(table)
                table[sym] = idx
            ids[i] = idx
        out.append(ids)
    return out


def _pack_order(ids_list, order: int, bits: int):
    """Per sequence: sorted packed n-grams of one order, flattened with offsets."""
    chunks = []
    offsets = np.zeros(len(ids_list) + 1, dtype=np.int64)
    for i, ids in enumerate(ids_list):
        n = len(ids) - order + 1
        if n <= 0:
            offsets[i + 1] = offsets[i]
            continue
        acc = np.zeros(n, dtype=np.int64)
        for d in range(order):
            acc = (acc << bits) | ids[d : d + n]
        acc.sort()
        chunks.append(acc)
        offsets[i + 1] = offsets[i] + n
    data = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
    return data, offsets


def _pairwise_matches_python(hyp_seqs, ref_seqs, max_order: int) -> np.ndarray:
    matches = np.zeros((len(hyp_seqs), len(ref_seqs), max_order), dtype=np.int64)
    for order in range(1, max_order + 1):
        hyp_counts = [
            Counter(tuple(s[i : i + order]) for i in range(len(s) - order + 1))
            for s in hyp_seqs
        ]
        ref_counts = [
            Counter(tuple(s[i : i + order]) for i in range(len(s) - order + 1))
            for s in ref_seqs
        ]
        for i, hc in enumerate(hyp_counts):
            for j, rc in enumerate(ref_counts):
                matches[i, j, order - 1] = sum(
                    min(c, rc[g]) for g, c in hc.items() if g in rc
                )
    return matches


def pairwise_matches(
    hyp_seqs,
    ref_seqs,
    max_order: int,
    bits: int,
    backend: str | None = None,
) -> np.ndarray:
    """Clipped match counts for every pair, shape [M, N, max_order].

    ``hyp_seqs``/``ref_seqs`` are sequences of hashable symbols.  Falls
    back to a plain-Python path when the joint alphabet does not fit in
    ``bits`` bits per symbol.
    """
    if max_order * bits >= 63:
        raise ValidationError("packed n-grams would overflow int64")
    table: dict = {}
    hyp_ids = _symbol_ids(hyp_seqs, table)
    ref_ids = _symbol_ids(ref_seqs, table)
    if len(table) > (1 << bits):
        return _pairwise_matches_python(hyp_seqs, ref_seqs, max_order)
    mod = _backend_module(backend)
    matches = np.zeros((len(hyp_seqs), len(ref_seqs), max_order), dtype=np.int64)
    for order in range(1, max_order + 1):
        hdata, hoff = _pack_order(hyp_ids, order, bits)
        rdata, roff = _pack_order(ref_ids, order, bits)
        matches[:, :, order - 1] = mod.matches_one_order(hdata, hoff, rdata, roff)
    return matches


def pairwise_bleu_matches(hyp_tokens, ref_tokens, backend: str | None = None) -> np.ndarray:
    """Token n-gram matches for BLEU, orders 1..4, shape [M, N, 4]."""
    return pairwise_matches(hyp_tokens, ref_tokens, 4, TOKEN_BITS, backend)


def pairwise_chrf_matches(hyp_texts, ref_texts, backend: str | None = None) -> np.ndarray:
    """Character n-gram matches for chrF, orders 1..6, shape [M, N, 6].

    Whitespace is removed before extraction, as in the scalar metric.
    """
    hyp_chars = [list("".join(t.split())) for t in hyp_texts]
    ref_chars = [list("".join(t.split())) for t in ref_texts]
    return pairwise_matches(hyp_chars, ref_chars, 6, CHAR_BITS, backend)
