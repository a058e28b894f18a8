from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbestkit import ValidationError, sentence_bleu, sentence_chrf
from nbestkit.kernels import (
    BACKEND_ENV,
    CHAR_BITS,
    TOKEN_BITS,
    _pairwise_matches_python,
    pairwise_bleu_matches,
    pairwise_chrf_matches,
    pairwise_matches,
    resolve_backend,
)
from nbestkit.mbr import _bleu_values, _chrf_values
from nbestkit.rng import generator_for

HAVE_NUMBA = resolve_backend("auto") == "numba"


def oracle_matches(hyp_seqs, ref_seqs, max_order):
    out = np.zeros((len(hyp_seqs), len(ref_seqs), max_order), dtype=np.int64)
    for i, h in enumerate(hyp_seqs):
        for j, r in enumerate(ref_seqs):
            for n in range(1, max_order + 1):
                hc = Counter(tuple(h[k : k + n]) for k in range(len(h) - n + 1))
                rc = Counter(tuple(r[k : k + n]) for k in range(len(r) - n + 1))
                out[i, j, n - 1] = sum(min(c, rc[g]) for g, c in hc.items())
    return out


def random_seqs(rng, count, alphabet, max_len):
    return [
        [str(rng.integers(alphabet)) for _ in range(rng.integers(0, max_len + 1))]
        for _ in range(count)
    ]


def test_backends_agree_with_oracle():
    rng = generator_for(17, 0)
    for _ in range(10):
        hyps = random_seqs(rng, 6, 5, 9)
        refs = random_seqs(rng, 4, 5, 9)
        want = oracle_matches(hyps, refs, 4)
        got_np = pairwise_matches(hyps, refs, 4, TOKEN_BITS, backend="numpy")
        assert np.array_equal(got_np, want)
        got_py = _pairwise_matches_python(hyps, refs, 4)
        assert np.array_equal(got_py, want)
        if HAVE_NUMBA:
            got_nb = pairwise_matches(hyps, refs, 4, TOKEN_BITS, backend="numba")
            assert np.array_equal(got_nb, want)


def test_empty_sequences_and_short_orders():
    hyps = [[], ["a"], ["a", "b"]]
    refs = [["a", "b", "c"], []]
    got = pairwise_matches(hyps, refs, 4, TOKEN_BITS, backend="numpy")
    assert got.shape == (3, 2, 4)
    assert got[0].sum() == 0
    assert got[1, 0].tolist() == [1, 0, 0, 0]
    assert got[2, 0].tolist() == [2, 1, 0, 0]
    assert got[:, 1].sum() == 0


def test_clipping_counts_duplicates_once_per_ref_occurrence():
    hyps = [["a", "a", "a"]]
    refs = [["a", "a"]]
    got = pairwise_matches(hyps, refs, 2, TOKEN_BITS, backend="numpy")
    assert got[0, 0].tolist() == [2, 1]


def test_large_alphabet_falls_back_to_python():
    # 5 distinct symbols with 2-bit packing exceeds the table
    hyps = [["s0", "s1", "s2"]]
    refs = [["s3", "s4", "s0"]]
    want = oracle_matches(hyps, refs, 2)
    got = pairwise_matches(hyps, refs, 2, bits=2, backend="numpy")
    assert np.array_equal(got, want)


def test_overflow_guard():
    with pytest.raises(ValidationError, match="overflow"):
        pairwise_matches([["a"]], [["a"]], max_order=5, bits=13)
    # 4 * 15 = 60 < 63 is fine
    pairwise_matches([["a"]], [["a"]], max_order=4, bits=15)


def test_resolve_backend_env(monkeypatch):
    monkeypatch.setenv(BACKEND_ENV, "numpy")
    assert resolve_backend() == "numpy"
    monkeypatch.setenv(BACKEND_ENV, "NumPy")
    assert resolve_backend() == "numpy"
    monkeypatch.setenv(BACKEND_ENV, "nonsense")
    with pytest.raises(ValidationError, match="backend"):
        resolve_backend()
    monkeypatch.delenv(BACKEND_ENV)
    assert resolve_backend() in ("numba", "numpy")
    with pytest.raises(ValidationError):
        resolve_backend("garbage")


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not importable")
def test_env_selects_backend_at_call_time(monkeypatch):
    hyps = random_seqs(generator_for(3, 0), 3, 4, 6)
    monkeypatch.setenv(BACKEND_ENV, "numba")
    a = pairwise_matches(hyps, hyps, 4, TOKEN_BITS)
    monkeypatch.setenv(BACKEND_ENV, "numpy")
    b = pairwise_matches(hyps, hyps, 4, TOKEN_BITS)
    assert np.array_equal(a, b)


def test_bleu_composition_matches_scalar_metric():
    texts = [
        "the cat sat on the mat",
        "a cat sat on a mat",
        "completely different words here",
        "",
        "the the the the the",
    ]
    values = _bleu_values(texts, texts)
    for i, hyp in enumerate(texts):
        for j, ref in enumerate(texts):
            assert values[i, j] == sentence_bleu(hyp, ref)


def test_chrf_composition_matches_scalar_metric():
    texts = ["abcd efg", "abc defg", "zzz", "", "ab"]
    values = _chrf_values(texts, texts)
    for i, hyp in enumerate(texts):
        for j, ref in enumerate(texts):
            assert values[i, j] == sentence_chrf(hyp, ref)


def test_chrf_matches_strip_whitespace():
    got = pairwise_chrf_matches(["a b"], ["ab"], backend="numpy")
    # identical after whitespace removal: 2 unigrams, 1 bigram
    assert got[0, 0, 0] == 2
    assert got[0, 0, 1] == 1
    assert got.shape == (1, 1, 6)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.lists(st.sampled_from("abc"), max_size=8),
        min_size=1,
        max_size=4,
    ),
    st.lists(
        st.lists(st.sampled_from("abc"), max_size=8),
        min_size=1,
        max_size=4,
    ),
)
def test_property_backend_parity(hyps, refs):
    want = oracle_matches(hyps, refs, 4)
    got = pairwise_matches(hyps, refs, 4, TOKEN_BITS, backend="numpy")
    assert np.array_equal(got, want)
    if HAVE_NUMBA:
        got_nb = pairwise_matches(hyps, refs, 4, TOKEN_BITS, backend="numba")
        assert np.array_equal(got_nb, want)


def test_pairwise_bleu_matches_shape():
    got = pairwise_bleu_matches([["a", "b"]], [["a"], ["b", "a"]])
    assert got.shape == (1, 2, 4)
    assert got[0, 0].tolist() == [1, 0, 0, 0]
    assert got[0, 1].tolist() == [2, 0, 0, 0]


def test_unicode_symbols():
    hyps = [list("héllo"), list("日本語のテキスト")]
    refs = [list("héllo"), list("日本語")]
    want = oracle_matches(hyps, refs, 6)
    got = pairwise_matches(hyps, refs, 6, CHAR_BITS, backend="numpy")
    assert np.array_equal(got, want)
    if HAVE_NUMBA:
        got_nb = pairwise_matches(hyps, refs, 6, CHAR_BITS, backend="numba")
        assert np.array_equal(got_nb, want)
