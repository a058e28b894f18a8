"""Candidate reranking: single-feature and tuned linear combinations.

Fixed reranking picks, per segment, the candidate maximizing one named
feature.  Tuned reranking maximizes a weighted sum of features; the
weights typically come from :mod:`nbestkit.mert`.  Feature extraction
scores every candidate under every configured reference-free metric
(plus the reserved ``logprob`` pseudo-feature read from the N-best
entries) and can persist the result as a cache file so tuning never
re-invokes scorers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .corpus_io import NBestEntry, WeightsTable
from .errors import ParseError, ScorerError, ValidationError
from .metrics import REFERENCE_FREE, MetricSpec, score_rows

LOGPROB = "logprob"


@dataclass(frozen=True)
class Selection:
    """One chosen candidate for one segment."""

    segment_id: int
    index: int
    text: str
    score: float
    margin: float

    def __post_init__(self):
        if self.index < 0:
            raise ValidationError("selection index must be nonnegative")
        if self.margin < 0:
            raise ValidationError("selection margin must be nonnegative")


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-segment feature blocks sharing one ordered column set.

    ``blocks[s]`` is a float array of shape [candidates, features]
    aligned with segment ``ids[s]``.
    """

    names: tuple[str, ...]
    ids: tuple[int, ...]
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.names:
            raise ValidationError("feature matrix needs at least one column")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("duplicate feature names")
        if len(self.ids) != len(self.blocks):
            raise ValidationError("ids and blocks must align")
        for seg_id, block in zip(self.ids, self.blocks):
            if block.ndim != 2 or block.shape[1] != len(self.names):
                raise ValidationError(
                    f"segment {seg_id}: block shape {block.shape} does not match "
                    f"{len(self.names)} columns"
                )
            if not np.all(np.isfinite(block)):
                raise ValidationError(f"segment {seg_id}: non-finite feature value")

    def column_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown feature {name!r}") from None

    def validate_against(self, entries: list[NBestEntry]) -> None:
        if tuple(e.segment.id for e in entries) != self.ids:
            raise ValidationError("feature matrix ids do not match entries")
        for entry, block in zip(entries, self.blocks):
            if block.shape[0] != len(entry.candidates):
                raise ValidationError(
                    f"segment {entry.segment.id}: {block.shape[0]} feature rows "
                    f"for {len(entry.candidates)} candidates"
                )


def _logprob_column(entry: NBestEntry) -> list[float]:
    values = []
    for i, cand in enumerate(entry.candidates):
        if cand.logprob is None:
            raise ValidationError(
                f"segment {entry.segment.id} candidate {i} has no stored logprob"
            )
        values.append(cand.logprob)
    return values


def _locate(offsets: list[int], entries, row: int) -> str:
    # map a flat row index back to segment/candidate coordinates
    if row >= 0:
        for s in range(len(offsets) - 1):
            if offsets[s] <= row < offsets[s + 1]:
                return f"segment {entries[s].segment.id} candidate {row - offsets[s]}"
    return "unknown position"


def extract_features(entries: list[NBestEntry], specs) -> FeatureMatrix:
    """Score every candidate under every spec; one column per spec.

    ``specs`` items are either the string ``"logprob"`` or a
    reference-free :class:`MetricSpec`.  External scorers receive one
    batch covering the whole corpus.  Column order follows ``specs``.
    """
    if not entries:
        raise ValidationError("no entries to extract features from")
    if not specs:
        raise ValidationError("no feature specs given")
    offsets = [0]
    for entry in entries:
        offsets.append(offsets[-1] + len(entry.candidates))
    columns: list[list[float]] = []
    names: list[str] = []
    for spec in specs:
        if spec == LOGPROB:
            names.append(LOGPROB)
            col: list[float] = []
            for entry in entries:
                col.extend(_logprob_column(entry))
            columns.append(col)
            continue
        if not isinstance(spec, MetricSpec):
            raise ValidationError(f"bad feature spec {spec!r}")
        if spec.kind != REFERENCE_FREE:
            raise ValidationError(
                f"feature {spec.name!r} is not reference-free; rerank features "
                "cannot use references"
            )
        names.append(spec.name)
        rows = [
            (entry.segment.text, cand.text)
            for entry in entries
            for cand in entry.candidates
        ]
        try:
            columns.append(score_rows(spec, rows))
        except ScorerError as exc:
            where = _locate(offsets, entries, getattr(exc, "row_index", -1))
            raise type(exc)(f"feature {spec.name!r} at {where}: {exc}") from exc
    blocks = []
    for s, entry in enumerate(entries):
        lo, hi = offsets[s], offsets[s + 1]
        block = np.array([[col[r] for col in columns] for r in range(lo, hi)], dtype=float)
        blocks.append(block)
    return FeatureMatrix(tuple(names), tuple(e.segment.id for e in entries), tuple(blocks))


def _select(entry: NBestEntry, scores: np.ndarray) -> Selection:
    if len(scores) != len(entry.candidates) or len(scores) == 0:
        raise ValidationError(
            f"segment {entry.segment.id}: scores do not cover candidates"
        )
    best = int(np.argmax(scores))
    if len(scores) > 1:
        rest = np.delete(scores, best)
        margin = float(scores[best] - rest.max())
    else:
        margin = 0.0
    return Selection(
        segment_id=entry.segment.id,
        index=best,
        text=entry.candidates[best].text,
        score=float(scores[best]),
        margin=margin,
    )


def rerank_fixed(
    entries: list[NBestEntry], features: FeatureMatrix, feature: str
) -> list[Selection]:
    """Per segment, the candidate maximizing one feature column.

    Ties go to the lowest candidate index (generation order).
    """
    features.validate_against(entries)
    k = features.column_index(feature)
    return [
        _select(entry, block[:, k]) for entry, block in zip(entries, features.blocks)
    ]


def weight_vector(names: tuple[str, ...], weights: WeightsTable) -> np.ndarray:
    """Dense weight vector over ``names``; absent names get weight 0."""
    unknown = [n for n in weights.names() if n not in names]
    if unknown:
        raise ValidationError(f"weights name unknown features: {unknown}")
    return np.array([weights.entries.get(n, 0.0) for n in names], dtype=float)


def rerank_tuned(
    entries: list[NBestEntry], features: FeatureMatrix, weights: WeightsTable
) -> list[Selection]:
    """Per segment, the candidate maximizing the weighted feature sum."""
    features.validate_against(entries)
    w = weight_vector(features.names, weights)
    return [
        _select(entry, block @ w) for entry, block in zip(entries, features.blocks)
    ]


def _ordered_names(keys) -> tuple[str, ...]:
    # deterministic column order for dict-shaped inputs
    names = sorted(keys)
    if LOGPROB in names:
        names.remove(LOGPROB)
        names.insert(0, LOGPROB)
    return tuple(names)


def feature_matrix_from_entries(entries: list[NBestEntry]) -> FeatureMatrix:
    """Build a matrix from features stored on the candidates themselves.

    Adds the ``logprob`` column when every candidate carries a logprob.
    Candidates must share one feature-name set.
    """
    if not entries:
        raise ValidationError("no entries")
    key_set = None
    have_logprob = all(
        c.logprob is not None for e in entries for c in e.candidates
    )
    for entry in entries:
        for i, cand in enumerate(entry.candidates):
            keys = frozenset(cand.features)
            if key_set is None:
                key_set = keys
            elif keys != key_set:
                raise ValidationError(
                    f"segment {entry.segment.id} candidate {i}: feature names "
                    "differ across candidates"
                )
    assert key_set is not None
    names = list(_ordered_names(key_set))
    if have_logprob and LOGPROB not in names:
        names.insert(0, LOGPROB)
    if not names:
        raise ValidationError("candidates carry no features and no logprobs")
    blocks = []
    for entry in entries:
        rows = []
        for cand in entry.candidates:
            rows.append(
                [
                    cand.logprob if n == LOGPROB and n not in cand.features
                    else cand.features[n]
                    for n in names
                ]
            )
        blocks.append(np.array(rows, dtype=float))
    return FeatureMatrix(
        tuple(names), tuple(e.segment.id for e in entries), tuple(blocks)
    )


def write_feature_cache(matrix: FeatureMatrix, path) -> None:
    """Persist a feature matrix as JSON lines mirroring the N-best ids."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for seg_id, block in zip(matrix.ids, matrix.blocks):
            record = {
                "id": seg_id,
                "features": [
                    {name: float(v) for name, v in zip(matrix.names, row)}
                    for row in block
                ],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_feature_cache(path) -> FeatureMatrix:
    """Read a feature cache written by :func:`write_feature_cache`."""
    ids: list[int] = []
    blocks: list[np.ndarray] = []
    names: tuple[str, ...] | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip("\r\n")
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON record: {exc.msg}", line_no) from None
            if (
                not isinstance(record, dict)
                or not isinstance(record.get("id"), int)
                or not isinstance(record.get("features"), list)
                or not record["features"]
            ):
                raise ParseError("record must have an int 'id' and nonempty 'features'", line_no)
            rows = record["features"]
            for row in rows:
                if not isinstance(row, dict) or not all(
                    isinstance(v, (int, float)) and math.isfinite(v)
                    for v in row.values()
                ):
                    raise ParseError("features must map names to finite numbers", line_no)
            if names is None:
                names = _ordered_names(rows[0])
            for row in rows:
                if frozenset(row) != frozenset(names):
                    raise ParseError("feature names differ across candidates", line_no)
            ids.append(record["id"])
            blocks.append(np.array([[row[n] for n in names] for row in rows], dtype=float))
    if names is None:
        raise ValidationError(f"feature cache {path} is empty")
    return FeatureMatrix(names, tuple(ids), tuple(blocks))
