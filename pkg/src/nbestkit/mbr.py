"""Minimum Bayes risk selection over candidate lists.

Candidates double as Monte-Carlo pseudo-references: the expected
utility of each hypothesis is the multiplicity-weighted mean of a
pairwise utility against every pseudo-reference, and the hypothesis
maximizing it wins.  The two-stage variant first prunes the list with
tuned linear weights and runs MBR among the survivors only, cutting the
quadratic utility cost to the pruned size.

Expected utilities are computed with exact float summation (``fsum``)
over one term per underlying sample, divided by the integer sample
count, so merged-duplicate and raw-duplicate candidate lists give
bit-identical expectations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus_io import NBestEntry, WeightsTable
from .errors import ScorerError, ValidationError
from .external import ExternalScorer
from .kernels import pairwise_bleu_matches, pairwise_chrf_matches
from .metrics import (
    REFERENCE_BASED,
    MetricSpec,
    SufficientStats,
    chrf_from_counts,
    sentence_bleu_from_stats,
    tokenize_13a,
)
from .rerank import FeatureMatrix, Selection, weight_vector

ALL_REFS = "all"


@dataclass(frozen=True)
class MbrConfig:
    """Settings for expected-utility selection.

    ``num_pseudo_refs`` is "all" or a positive M: pseudo-references are
    the first M generated samples (multiplicities consume sample slots
    in candidate order).  ``prune_to`` enables the two-stage path.
    ``full_pseudo_refs`` keeps the unpruned list as pseudo-references in
    the two-stage path (ablation; default prunes both sides).
    """

    utility: MetricSpec
    include_diagonal: bool = True
    num_pseudo_refs: int | str = ALL_REFS
    prune_to: int | None = None
    full_pseudo_refs: bool = False

    def __post_init__(self):
        if self.utility.kind != REFERENCE_BASED:
            raise ValidationError("MBR utility must be a reference-based metric")
        if self.num_pseudo_refs != ALL_REFS:
            if not isinstance(self.num_pseudo_refs, int) or self.num_pseudo_refs < 1:
                raise ValidationError('num_pseudo_refs must be "all" or a positive int')
        if self.prune_to is not None and self.prune_to < 1:
            raise ValidationError("prune_to must be positive")


@dataclass(frozen=True)
class UtilityMatrix:
    """Pairwise utilities u(hyp_i, pseudo_ref_j) for one segment.

    Rows and columns are labeled with candidate indices into the
    original entry; column weights are normalized multiplicities.
    """

    values: np.ndarray
    hyp_indices: tuple[int, ...]
    ref_indices: tuple[int, ...]
    ref_multiplicities: tuple[int, ...]

    def __post_init__(self):
        if self.values.shape != (len(self.hyp_indices), len(self.ref_indices)):
            raise ValidationError("utility matrix shape does not match labels")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("utility matrix has non-finite entries")
        if any(m < 1 for m in self.ref_multiplicities):
            raise ValidationError("pseudo-reference multiplicities must be positive")
        if abs(float(np.sum(self.ref_weights)) - 1.0) > 1e-12:
            raise ValidationError("pseudo-reference weights must sum to 1")

    @property
    def ref_weights(self) -> np.ndarray:
        mults = np.array(self.ref_multiplicities, dtype=float)
        return mults / mults.sum()


def _pseudo_refs(entry: NBestEntry, num) -> tuple[list[int], list[int]]:
    """Column labels and multiplicities; an int budget consumes the first
    M samples in candidate order."""
    if num == ALL_REFS:
        return (
            list(range(len(entry.candidates))),
            [c.multiplicity for c in entry.candidates],
        )
    if num > entry.sample_count:
        raise ValidationError(
            f"segment {entry.segment.id}: {num} pseudo-references requested "
            f"but only {entry.sample_count} samples present"
        )
    indices: list[int] = []
    mults: list[int] = []
    remaining = num
    for j, cand in enumerate(entry.candidates):
        if remaining == 0:
            break
        take = min(cand.multiplicity, remaining)
        indices.append(j)
        mults.append(take)
        remaining -= take
    return indices, mults


def _bleu_values(hyp_texts, ref_texts) -> np.ndarray:
    hyp_toks = [tokenize_13a(t) for t in hyp_texts]
    ref_toks = [tokenize_13a(t) for t in ref_texts]
    matches = pairwise_bleu_matches(hyp_toks, ref_toks)
    values = np.empty(matches.shape[:2], dtype=float)
    for i, toks in enumerate(hyp_toks):
        totals = tuple(max(0, len(toks) - n) for n in range(4))
        for j, rtoks in enumerate(ref_toks):
            stats = SufficientStats(
                tuple(int(v) for v in matches[i, j]), totals, len(toks), len(rtoks)
            )
            values[i, j] = sentence_bleu_from_stats(stats)
    return values


def _chrf_values(hyp_texts, ref_texts) -> np.ndarray:
    matches = pairwise_chrf_matches(hyp_texts, ref_texts)
    hyp_lens = [len("".join(t.split())) for t in hyp_texts]
    ref_lens = [len("".join(t.split())) for t in ref_texts]
    values = np.empty(matches.shape[:2], dtype=float)
    for i, hl in enumerate(hyp_lens):
        for j, rl in enumerate(ref_lens):
            rows = [
                (int(matches[i, j, n - 1]), max(0, hl - n + 1), max(0, rl - n + 1))
                for n in range(1, 7)
            ]
            values[i, j] = chrf_from_counts(rows)
    return values


def _pair_values(
    src: str,
    hyp_texts: list[str],
    ref_texts: list[str],
    spec: MetricSpec,
    scorer: ExternalScorer | None,
) -> np.ndarray:
    if spec.backend == "builtin_bleu":
        return _bleu_values(hyp_texts, ref_texts)
    if spec.backend == "builtin_chrf":
        return _chrf_values(hyp_texts, ref_texts)
    rows = [(src, h, r) for h in hyp_texts for r in ref_texts]
    try:
        if scorer is not None:
            flat = scorer.score(rows)
        else:
            with ExternalScorer(spec.external, expected_kind=REFERENCE_BASED) as one:
                flat = one.score(rows)
    except ScorerError as exc:
        row = getattr(exc, "row_index", None)
        if row is not None and ref_texts:
            i, j = divmod(row, len(ref_texts))
            raise type(exc)(f"utility at pair ({i}, {j}): {exc}") from exc
        raise
    return np.array(flat, dtype=float).reshape(len(hyp_texts), len(ref_texts))


def utility_matrix(
    entry: NBestEntry, cfg: MbrConfig, scorer: ExternalScorer | None = None
) -> UtilityMatrix:
    """All pairwise utilities for one segment, one scorer batch.

    Pass an open ``scorer`` to reuse one external process across
    segments; otherwise external utilities launch a one-shot process.
    """
    ref_idx, ref_mult = _pseudo_refs(entry, cfg.num_pseudo_refs)
    hyp_texts = [c.text for c in entry.candidates]
    ref_texts = [entry.candidates[j].text for j in ref_idx]
    values = _pair_values(entry.segment.text, hyp_texts, ref_texts, cfg.utility, scorer)
    return UtilityMatrix(
        values=values,
        hyp_indices=tuple(range(len(entry.candidates))),
        ref_indices=tuple(ref_idx),
        ref_multiplicities=tuple(ref_mult),
    )


def expected_utilities(matrix: UtilityMatrix, include_diagonal: bool = True) -> np.ndarray:
    """Per-hypothesis expected utility under the sample distribution.

    Exact summation: one term per underlying sample, ``fsum`` over the
    terms, divided by the integer sample count.  Excluding the diagonal
    drops the hypothesis's own column and renormalizes; a hypothesis
    whose own column is the only one keeps it (nothing else to average).
    """
    total = sum(matrix.ref_multiplicities)
    col_of = {label: j for j, label in enumerate(matrix.ref_indices)}
    out = np.empty(len(matrix.hyp_indices), dtype=float)
    for r, hyp_label in enumerate(matrix.hyp_indices):
        skip = None if include_diagonal else col_of.get(hyp_label)
        denom = total if skip is None else total - matrix.ref_multiplicities[skip]
        if denom == 0:
            skip = None
            denom = total
        out[r] = (
            math.fsum(
                term
                for j, mult in enumerate(matrix.ref_multiplicities)
                if j != skip
                for term in (float(matrix.values[r, j]),) * mult
            )
            / denom
        )
    return out


def _select_from(entry: NBestEntry, hyp_indices, expected: np.ndarray) -> Selection:
    best = int(np.argmax(expected))
    if len(expected) > 1:
        rest = np.delete(expected, best)
        margin = float(expected[best] - rest.max())
    else:
        margin = 0.0
    index = hyp_indices[best]
    return Selection(
        segment_id=entry.segment.id,
        index=index,
        text=entry.candidates[index].text,
        score=float(expected[best]),
        margin=margin,
    )


def mbr_select(
    entry: NBestEntry, cfg: MbrConfig, scorer: ExternalScorer | None = None
) -> Selection:
    """The candidate with the highest expected utility; ties go to the
    lowest candidate index."""
    matrix = utility_matrix(entry, cfg, scorer)
    expected = expected_utilities(matrix, cfg.include_diagonal)
    return _select_from(entry, matrix.hyp_indices, expected)


def two_stage_select(
    entry: NBestEntry,
    features: FeatureMatrix,
    weights: WeightsTable,
    cfg: MbrConfig,
    scorer: ExternalScorer | None = None,
) -> Selection:
    """Prune to the top ``cfg.prune_to`` by linear score, then MBR among
    the survivors; reported indices refer to the original list.

    Both hypothesis and pseudo-reference sets are the kept candidates
    (cost M^2 utilities) unless ``cfg.full_pseudo_refs`` keeps the whole
    list as pseudo-references.
    """
    if cfg.prune_to is None:
        raise ValidationError("two_stage_select requires prune_to")
    n = len(entry.candidates)
    if cfg.prune_to > n:
        raise ValidationError(
            f"segment {entry.segment.id}: prune_to {cfg.prune_to} exceeds "
            f"{n} candidates"
        )
    try:
        pos = features.ids.index(entry.segment.id)
    except ValueError:
        raise ValidationError(
            f"segment {entry.segment.id} missing from feature matrix"
        ) from None
    block = features.blocks[pos]
    if block.shape[0] != n:
        raise ValidationError(
            f"segment {entry.segment.id}: feature rows do not match candidates"
        )
    scores = block @ weight_vector(features.names, weights)
    ranked = sorted(range(n), key=lambda i: (-scores[i], i))
    kept = sorted(ranked[: cfg.prune_to])

    hyp_texts = [entry.candidates[i].text for i in kept]
    if cfg.full_pseudo_refs:
        ref_idx = list(range(n))
    else:
        ref_idx = kept
    ref_texts = [entry.candidates[j].text for j in ref_idx]
    ref_mult = [entry.candidates[j].multiplicity for j in ref_idx]
    values = _pair_values(entry.segment.text, hyp_texts, ref_texts, cfg.utility, scorer)
    matrix = UtilityMatrix(
        values=values,
        hyp_indices=tuple(kept),
        ref_indices=tuple(ref_idx),
        ref_multiplicities=tuple(ref_mult),
    )
    expected = expected_utilities(matrix, cfg.include_diagonal)
    return _select_from(entry, matrix.hyp_indices, expected)
