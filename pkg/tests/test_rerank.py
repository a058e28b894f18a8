import numpy as np
import pytest

from nbestkit import (
    FeatureMatrix,
    MetricSpec,
    ScorerProtocolError,
    ValidationError,
    WeightsTable,
    extract_features,
    feature_matrix_from_entries,
    read_feature_cache,
    rerank_fixed,
    rerank_tuned,
    write_feature_cache,
)
from nbestkit.metrics import REFERENCE_FREE, ExternalScorerConfig

from conftest import make_entry, stub_command


def entries_two_segments():
    e0 = make_entry(0, ["alpha", "beta longer", "x"], logprobs=[-1.0, -0.5, -3.0])
    e1 = make_entry(1, ["one", "two words here"], logprobs=[-0.2, -2.5])
    return [e0, e1]


def matrix_for(entries, names=("logprob", "len")):
    blocks = []
    for e in entries:
        rows = [[c.logprob, float(len(c.text))] for c in e.candidates]
        blocks.append(np.array(rows, dtype=float))
    return FeatureMatrix(tuple(names), tuple(e.segment.id for e in entries), tuple(blocks))


def test_rerank_fixed_picks_argmax_per_segment():
    entries = entries_two_segments()
    matrix = matrix_for(entries)
    by_lp = rerank_fixed(entries, matrix, "logprob")
    assert [s.index for s in by_lp] == [1, 0]
    assert by_lp[0].text == "beta longer"
    by_len = rerank_fixed(entries, matrix, "len")
    assert [s.index for s in by_len] == [1, 1]


def test_selection_margin_and_score():
    entries = entries_two_segments()
    matrix = matrix_for(entries)
    sel = rerank_fixed(entries, matrix, "logprob")[0]
    assert sel.score == -0.5
    assert sel.margin == pytest.approx(0.5)
    single = make_entry(7, ["only"], logprobs=[-1.0])
    m1 = matrix_for([single])
    sel1 = rerank_fixed([single], m1, "logprob")[0]
    assert sel1.margin == 0.0


def test_fixed_tie_prefers_lowest_index():
    e = make_entry(0, ["first", "second"], logprobs=[-1.0, -1.0])
    sel = rerank_fixed([e], matrix_for([e]), "logprob")[0]
    assert sel.index == 0
    assert sel.margin == 0.0


def test_rerank_tuned_weighted_sum():
    entries = entries_two_segments()
    matrix = matrix_for(entries)
    weights = WeightsTable({"logprob": 1.0, "len": 0.1})
    sels = rerank_tuned(entries, matrix, weights)
    for e, block, sel in zip(entries, matrix.blocks, sels):
        scores = block @ np.array([1.0, 0.1])
        assert sel.index == int(np.argmax(scores))
        assert sel.score == pytest.approx(scores[sel.index])


def test_tuned_absent_weight_is_zero():
    entries = entries_two_segments()
    matrix = matrix_for(entries)
    only_len = WeightsTable({"len": 1.0})
    sels = rerank_tuned(entries, matrix, only_len)
    assert [s.index for s in sels] == [1, 1]


def test_tuned_unknown_weight_name():
    entries = entries_two_segments()
    matrix = matrix_for(entries)
    weights = WeightsTable({"mystery": 1.0})
    with pytest.raises(ValidationError, match="mystery"):
        rerank_tuned(entries, matrix, weights)


def test_matrix_entry_alignment_checks():
    entries = entries_two_segments()
    matrix = matrix_for(entries)
    with pytest.raises(ValidationError, match="ids"):
        rerank_fixed(list(reversed(entries)), matrix, "logprob")
    short = [entries[0], make_entry(1, ["one"], logprobs=[-0.2])]
    with pytest.raises(ValidationError, match="feature rows"):
        rerank_fixed(short, matrix, "logprob")
    with pytest.raises(ValidationError, match="unknown feature"):
        rerank_fixed(entries, matrix, "absent")


def test_matrix_validation():
    with pytest.raises(ValidationError, match="duplicate"):
        FeatureMatrix(("a", "a"), (0,), (np.zeros((1, 2)),))
    with pytest.raises(ValidationError, match="align"):
        FeatureMatrix(("a",), (0, 1), (np.zeros((1, 1)),))
    with pytest.raises(ValidationError, match="shape"):
        FeatureMatrix(("a", "b"), (0,), (np.zeros((2, 1)),))
    with pytest.raises(ValidationError, match="non-finite"):
        FeatureMatrix(("a",), (0,), (np.array([[np.nan]]),))


def test_extract_features_logprob_and_external():
    entries = entries_two_segments()
    spec = MetricSpec(
        name="hyplen",
        kind=REFERENCE_FREE,
        backend="external",
        external=ExternalScorerConfig(
            command=stub_command("--mode", "hyplen", "--kind", "noref")
        ),
    )
    matrix = extract_features(entries, ["logprob", spec])
    assert matrix.names == ("logprob", "hyplen")
    assert matrix.ids == (0, 1)
    assert matrix.blocks[0][:, 0].tolist() == [-1.0, -0.5, -3.0]
    assert matrix.blocks[0][:, 1].tolist() == [5.0, 11.0, 1.0]
    assert matrix.blocks[1][:, 1].tolist() == [3.0, 14.0]


def test_extract_features_missing_logprob():
    entry = make_entry(0, ["a", "b"], logprobs=[-1.0, None])
    with pytest.raises(ValidationError, match="segment 0 candidate 1"):
        extract_features([entry], ["logprob"])


def test_extract_features_rejects_reference_based_spec():
    entries = entries_two_segments()
    spec = MetricSpec(name="bleu")
    with pytest.raises(ValidationError, match="reference-free"):
        extract_features(entries, ["logprob", spec])


def test_extract_features_locates_scorer_failure():
    entries = entries_two_segments()
    # rows are flattened across segments; row 3 is segment 1 candidate 0
    spec = MetricSpec(
        name="bad",
        kind=REFERENCE_FREE,
        backend="external",
        external=ExternalScorerConfig(
            command=stub_command("--mode", "badline", "--at", "3", "--kind", "noref")
        ),
    )
    with pytest.raises(ScorerProtocolError, match="segment 1 candidate 0"):
        extract_features(entries, [spec])


def test_feature_matrix_from_entries_orders_columns():
    entries = [
        make_entry(
            0,
            ["a", "b"],
            logprobs=[-1.0, -2.0],
            features=[{"zeta": 1.0, "alpha": 2.0}, {"zeta": 0.0, "alpha": 5.0}],
        )
    ]
    matrix = feature_matrix_from_entries(entries)
    assert matrix.names == ("logprob", "alpha", "zeta")
    assert matrix.blocks[0].tolist() == [[-1.0, 2.0, 1.0], [-2.0, 5.0, 0.0]]


def test_feature_matrix_from_entries_requires_consistent_names():
    entries = [
        make_entry(
            0,
            ["a", "b"],
            features=[{"x": 1.0}, {"y": 1.0}],
            logprobs=[-1.0, -1.0],
        )
    ]
    with pytest.raises(ValidationError, match="differ"):
        feature_matrix_from_entries(entries)


def test_feature_matrix_from_entries_stored_logprob_feature_wins():
    # explicit feature named logprob overrides the candidate logprob column
    entries = [
        make_entry(
            0,
            ["a"],
            logprobs=[-9.0],
            features=[{"logprob": 1.5}],
        )
    ]
    matrix = feature_matrix_from_entries(entries)
    assert matrix.blocks[0].tolist() == [[1.5]]


def test_feature_cache_round_trip(tmp_path):
    entries = entries_two_segments()
    matrix = matrix_for(entries)
    path = tmp_path / "cache.jsonl"
    write_feature_cache(matrix, path)
    clone = read_feature_cache(path)
    assert clone.names == matrix.names
    assert clone.ids == matrix.ids
    for a, b in zip(clone.blocks, matrix.blocks):
        assert np.array_equal(a, b)
    # byte-stable rewrite
    first = path.read_bytes()
    write_feature_cache(clone, path)
    assert path.read_bytes() == first


def test_feature_cache_parse_errors(tmp_path):
    path = tmp_path / "cache.jsonl"
    path.write_text("{broken\n", encoding="utf-8")
    from nbestkit import ParseError

    with pytest.raises(ParseError, match="line 1"):
        read_feature_cache(path)
    path.write_text('{"id": 0, "features": []}\n', encoding="utf-8")
    with pytest.raises(ParseError, match="nonempty"):
        read_feature_cache(path)
    path.write_text('{"id": 0, "features": [{"x": "nope"}]}\n', encoding="utf-8")
    with pytest.raises(ParseError, match="finite"):
        read_feature_cache(path)


def test_extract_features_validation():
    with pytest.raises(ValidationError, match="entries"):
        extract_features([], ["logprob"])
    with pytest.raises(ValidationError, match="spec"):
        extract_features(entries_two_segments(), [])
    with pytest.raises(ValidationError, match="bad feature spec"):
        extract_features(entries_two_segments(), [42])
