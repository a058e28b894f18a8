"""Lexical metrics: 13a tokenization, BLEU, chrF, and metric dispatch.

BLEU follows the mteval-13a tokenizer and the usual SacreBLEU
conventions (mixed case, single reference).  Corpus BLEU is computed
from additive sufficient statistics with raw precisions; sentence BLEU
applies the exponential smoothing recurrence over the orders the
hypothesis actually has.  chrF is the character n-gram F-score with
n = 1..6 and beta = 2, whitespace removed before extraction.

The exact formulas are normative and written out in
docs/format-spec.md; the test suite checks them against independently
written oracles.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import ValidationError

BLEU_MAX_ORDER = 4
CHRF_MAX_ORDER = 6
CHRF_BETA = 2.0

# mteval-13a: entity unescaping, then spacing rules around punctuation.
_13A_PUNCT = re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])")
_13A_PERIOD_BEFORE = re.compile(r"([^0-9])([\.,])")
_13A_PERIOD_AFTER = re.compile(r"([\.,])([^0-9])")
_13A_DASH = re.compile(r"([0-9])(-)")
_WS = re.compile(r"\s+")


def tokenize_13a(text: str) -> list[str]:
    """Tokenize ``text`` with the mteval-13a rules, preserving case."""
    norm = text
    norm = norm.replace("<skipped>", "")
    norm = norm.replace("-\n", "")
    norm = norm.replace("\n", " ")
    if "&" in norm:
        norm = norm.replace("&quot;", '"')
        norm = norm.replace("&amp;", "&")
        norm = norm.replace("&lt;", "<")
        norm = norm.replace("&gt;", ">")
    norm = f" {norm} "
    norm = _13A_PUNCT.sub(r" \1 ", norm)
    norm = _13A_PERIOD_BEFORE.sub(r"\1 \2 ", norm)
    norm = _13A_PERIOD_AFTER.sub(r" \1 \2", norm)
    norm = _13A_DASH.sub(r"\1 \2 ", norm)
    norm = _WS.sub(" ", norm).strip()
    if not norm:
        return []
    return norm.split(" ")


@dataclass(frozen=True)
class SufficientStats:
    """Corpus-decomposable BLEU statistics.

    ``match`` holds clipped n-gram matches and ``total`` hypothesis
    n-gram counts for n = 1..4.  Statistics are integers and add
    exactly, so incremental corpus sweeps agree bit-for-bit with batch
    computation.
    """

    match: tuple[int, int, int, int]
    total: tuple[int, int, int, int]
    hyp_len: int
    ref_len: int

    def __post_init__(self):
        for m, t in zip(self.match, self.total):
            if m > t:
                raise ValidationError(f"clipped matches {m} exceed total {t}")

    @classmethod
    def zero(cls) -> "SufficientStats":
        return cls((0, 0, 0, 0), (0, 0, 0, 0), 0, 0)

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        return SufficientStats(
            tuple(a + b for a, b in zip(self.match, other.match)),
            tuple(a + b for a, b in zip(self.total, other.total)),
            self.hyp_len + other.hyp_len,
            self.ref_len + other.ref_len,
        )

    def as_tuple(self) -> tuple[int, ...]:
        """Flat 10-tuple (match 1..4, total 1..4, hyp_len, ref_len)."""
        return (*self.match, *self.total, self.hyp_len, self.ref_len)

    @classmethod
    def from_tuple(cls, flat) -> "SufficientStats":
        flat = tuple(int(v) for v in flat)
        return cls(flat[0:4], flat[4:8], flat[8], flat[9])


def _ngram_counts(tokens: list, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(hyp: str, ref: str) -> SufficientStats:
    """Clipped n-gram match statistics for one hypothesis/reference pair."""
    hyp_toks = tokenize_13a(hyp)
    ref_toks = tokenize_13a(ref)
    return bleu_stats_tokens(hyp_toks, ref_toks)


def bleu_stats_tokens(hyp_toks: list, ref_toks: list) -> SufficientStats:
    """As :func:`bleu_stats` but over already tokenized sequences."""
    match = []
    total = []
    for n in range(1, BLEU_MAX_ORDER + 1):
        t = max(0, len(hyp_toks) - n + 1)
        total.append(t)
        if t == 0:
            match.append(0)
            continue
        hc = _ngram_counts(hyp_toks, n)
        rc = _ngram_counts(ref_toks, n)
        match.append(sum(min(c, rc[g]) for g, c in hc.items()))
    return SufficientStats(tuple(match), tuple(total), len(hyp_toks), len(ref_toks))


def _brevity_penalty(hyp_len: int, ref_len: int) -> float:
    if hyp_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / hyp_len)


def corpus_bleu(stats: SufficientStats) -> float:
    """Corpus BLEU from summed statistics, raw precisions, no smoothing.

    Returns 0 whenever any order has a zero total or zero match count.
    """
    if stats.hyp_len == 0:
        return 0.0
    log_sum = 0.0
    for m, t in zip(stats.match, stats.total):
        if t == 0 or m == 0:
            return 0.0
        log_sum += math.log(m / t)
    bp = _brevity_penalty(stats.hyp_len, stats.ref_len)
    return 100.0 * bp * math.exp(log_sum / BLEU_MAX_ORDER)


def sentence_bleu_from_stats(stats: SufficientStats) -> float:
    """Exponentially smoothed sentence BLEU from one sentence's statistics.

    Only orders the hypothesis has n-grams for participate (effective
    order min(hyp_len, 4)).  Within those, a zero-match order n takes
    precision 1/(2^k * total_n) where k counts zero-match orders seen so
    far.  An empty hypothesis scores 0 regardless of the reference.
    """
    eff_order = min(stats.hyp_len, BLEU_MAX_ORDER)
    if eff_order == 0:
        return 0.0
    smooth = 1.0
    log_sum = 0.0
    for n in range(eff_order):
        m, t = stats.match[n], stats.total[n]
        if m > 0:
            log_sum += math.log(m / t)
        else:
            smooth *= 2.0
            log_sum += math.log(1.0 / (smooth * t))
    bp = _brevity_penalty(stats.hyp_len, stats.ref_len)
    return 100.0 * bp * math.exp(log_sum / eff_order)


def sentence_bleu(hyp: str, ref: str) -> float:
    """Smoothed sentence BLEU in [0, 100]; equal nonempty strings score 100."""
    return sentence_bleu_from_stats(bleu_stats(hyp, ref))


def _char_ngram_counts(chars: str, n: int) -> Counter:
    return Counter(chars[i : i + n] for i in range(len(chars) - n + 1))


def chrf_counts(hyp: str, ref: str):
    """Per-order (match, hyp_total, ref_total) triples for chrF, n = 1..6."""
    hyp_chars = "".join(hyp.split())
    ref_chars = "".join(ref.split())
    rows = []
    for n in range(1, CHRF_MAX_ORDER + 1):
        ht = max(0, len(hyp_chars) - n + 1)
        rt = max(0, len(ref_chars) - n + 1)
        if ht == 0 or rt == 0:
            rows.append((0, ht, rt))
            continue
        hc = _char_ngram_counts(hyp_chars, n)
        rc = _char_ngram_counts(ref_chars, n)
        rows.append((sum(min(c, rc[g]) for g, c in hc.items()), ht, rt))
    return rows


def chrf_from_counts(rows) -> float:
    """chrF score from per-order (match, hyp_total, ref_total) triples.

    Orders where neither side has an n-gram are skipped; if no order is
    active (both strings empty) the strings are equal and score 100.
    """
    f_sum = 0.0
    active = 0
    for m, ht, rt in rows:
        if ht == 0 and rt == 0:
            continue
        active += 1
        precision = m / ht if ht > 0 else 0.0
        recall = m / rt if rt > 0 else 0.0
        denom = CHRF_BETA * CHRF_BETA * precision + recall
        if denom > 0.0:
            f_sum += (1.0 + CHRF_BETA * CHRF_BETA) * precision * recall / denom
    if active == 0:
        return 100.0
    return 100.0 * f_sum / active


def sentence_chrf(hyp: str, ref: str) -> float:
    """Character n-gram F-score in [0, 100]; equal strings score exactly 100."""
    return chrf_from_counts(chrf_counts(hyp, ref))


REFERENCE_BASED = "reference_based"
REFERENCE_FREE = "reference_free"

_BACKENDS = ("builtin_bleu", "builtin_chrf", "external")


@dataclass(frozen=True)
class ExternalScorerConfig:
    """How to launch and talk to an external scorer process."""

    command: tuple[str, ...]
    batch_size: int = 64
    timeout: float = 30.0

    def __post_init__(self):
        if not self.command:
            raise ValidationError("external scorer command must be nonempty")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        object.__setattr__(self, "command", tuple(self.command))


@dataclass(frozen=True)
class MetricSpec:
    """A named metric: builtin BLEU/chrF or an external scorer."""

    name: str
    kind: str = REFERENCE_BASED
    backend: str = "builtin_bleu"
    external: ExternalScorerConfig | None = field(default=None)

    def __post_init__(self):
        if self.kind not in (REFERENCE_BASED, REFERENCE_FREE):
            raise ValidationError(f"unknown metric kind {self.kind!r}")
        if self.backend not in _BACKENDS:
            raise ValidationError(f"unknown metric backend {self.backend!r}")
        if (self.external is not None) != (self.backend == "external"):
            raise ValidationError("external config present iff backend is external")
        if self.backend != "external" and self.kind != REFERENCE_BASED:
            raise ValidationError("builtin metrics are reference based")


BLEU_SPEC = MetricSpec(name="bleu", kind=REFERENCE_BASED, backend="builtin_bleu")
CHRF_SPEC = MetricSpec(name="chrf", kind=REFERENCE_BASED, backend="builtin_chrf")


def score_rows(spec: MetricSpec, rows: list[tuple]) -> list[float]:
    """Score (src, hyp[, ref]) rows under ``spec``; higher is better.

    Builtin metrics ignore the source.  External specs run one scorer
    process for the whole call, batched per the scorer config.
    """
    for row in rows:
        ref = row[2] if len(row) > 2 else None
        if spec.kind == REFERENCE_BASED and ref is None:
            raise ValidationError(
                f"reference_based metric {spec.name!r} invoked without a reference"
            )
    if spec.backend == "builtin_bleu":
        return [sentence_bleu(hyp, ref) for _, hyp, ref in rows]
    if spec.backend == "builtin_chrf":
        return [sentence_chrf(hyp, ref) for _, hyp, ref in rows]
    from .external import external_score

    return external_score(spec.external, rows)


def metric_fn(spec: MetricSpec):
    """A callable (src, hyp, ref=None) -> float for ``spec``.

    External specs keep one scorer process alive across calls; call the
    returned function's ``close()`` when done with it.
    """
    if spec.backend == "external":
        from .external import ExternalScorer

        scorer = ExternalScorer(spec.external, expected_kind=spec.kind)

        def fn(src: str, hyp: str, ref: str | None = None) -> float:
            if spec.kind == REFERENCE_BASED and ref is None:
                raise ValidationError(
                    f"reference_based metric {spec.name!r} invoked without a reference"
                )
            row = (src, hyp, ref) if spec.kind == REFERENCE_BASED else (src, hyp)
            return scorer.score([row])[0]

        fn.close = scorer.close
        return fn

    scalar = sentence_bleu if spec.backend == "builtin_bleu" else sentence_chrf

    def fn(src: str, hyp: str, ref: str | None = None) -> float:
        if ref is None:
            raise ValidationError(
                f"reference_based metric {spec.name!r} invoked without a reference"
            )
        return scalar(hyp, ref)

    fn.close = lambda: None
    return fn
