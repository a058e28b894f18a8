"""Candidate generation: beam search, ancestral and nucleus sampling.

All methods share the length convention of the toy model: a finished
sequence ends with eos and has total length at most ``max_len``.  A
draw that still has no eos when only one position remains is finalized
with eos and flagged truncated; its recorded logprob covers the
sampled tokens only.

Sampling draws one uniform per attempted step from the Philox stream
(seed, segment id), so multi-segment runs are reproducible regardless
of scheduling or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus_io import Candidate, NBestEntry, SourceSegment
from .errors import ValidationError
from .rng import generator_for
from .toy_model import ToyModel, next_distribution

METHODS = ("beam", "ancestral", "nucleus")


@dataclass(frozen=True)
class GenConfig:
    method: str = "beam"
    beam_size: int = 5
    num_samples: int = 1
    nucleus_p: float = 0.6
    max_len: int | None = None
    length_penalty: float = 0.0
    seed: int = 0
    dedup: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown generation method {self.method!r}")
        if self.beam_size < 1:
            raise ValidationError("beam_size must be >= 1")
        if self.num_samples < 1:
            raise ValidationError("num_samples must be >= 1")
        if not 0.0 < self.nucleus_p <= 1.0:
            raise ValidationError("nucleus_p must be in (0, 1]")
        if self.max_len is not None and self.max_len < 1:
            raise ValidationError("max_len must be >= 1")
        if self.length_penalty < 0.0:
            raise ValidationError("length_penalty must be >= 0")


@dataclass(frozen=True)
class BeamHypothesis:
    tokens: tuple[int, ...]
    logprob: float
    score: float
    truncated: bool = False


@dataclass(frozen=True)
class Sample:
    tokens: tuple[int, ...]
    logprob: float
    multiplicity: int = 1
    truncated: bool = False


def _finished_score(logprob: float, length: int, penalty: float) -> float:
    if penalty == 0.0:
        return logprob
    return logprob / (length**penalty)


def beam_search(model: ToyModel, cfg: GenConfig) -> list[BeamHypothesis]:
    """Length-synchronous beam search over log-probabilities.

    Finished hypotheses stay in the pool and compete by score, so
    beam_size=1 reduces to greedy argmax decoding.  An unfinished
    hypothesis one position short of max_len takes its eos continuation
    (or a forced eos with content-only score when eos has probability
    zero, flagged truncated).  Output is sorted by score descending,
    ties by token order.
    """
    max_len = cfg.max_len if cfg.max_len is not None else model.max_len
    eos = model.vocab.eos_index
    size = len(model.vocab)
    # pool entries: (tokens, logprob, finished, truncated)
    pool: list[tuple[tuple[int, ...], float, bool, bool]] = [((), 0.0, False, False)]

    def sort_key(item):
        tokens, logprob, finished, _ = item
        score = (
            _finished_score(logprob, len(tokens), cfg.length_penalty)
            if finished
            else logprob
        )
        return (-score, tokens)

    while any(not finished for _, _, finished, _ in pool):
        children: list[tuple[tuple[int, ...], float, bool, bool]] = []
        for tokens, logprob, finished, truncated in pool:
            if finished:
                children.append((tokens, logprob, finished, truncated))
                continue
            row = next_distribution(model, tokens)
            if len(tokens) == max_len - 1:
                p_eos = float(row[eos])
                if p_eos > 0.0:
                    children.append(
                        (tokens + (eos,), logprob + math.log(p_eos), True, False)
                    )
                else:
                    children.append((tokens + (eos,), logprob, True, True))
                continue
            for t in range(size):
                p = float(row[t])
                if p <= 0.0:
                    continue
                child_lp = logprob + math.log(p)
                if t == eos:
                    children.append((tokens + (eos,), child_lp, True, False))
                else:
                    children.append((tokens + (t,), child_lp, False, False))
        children.sort(key=sort_key)
        pool = children[: cfg.beam_size]
        if not pool:
            break

    out = [
        BeamHypothesis(
            tokens=tokens,
            logprob=logprob,
            score=_finished_score(logprob, len(tokens), cfg.length_penalty),
            truncated=truncated,
        )
        for tokens, logprob, _, truncated in pool
    ]
    out.sort(key=lambda h: (-h.score, h.tokens))
    return out


def _draw_index(probs: np.ndarray, cum: np.ndarray, u: float) -> int:
    """Inverse-CDF draw; never lands on a zero-probability cell."""
    idx = int(np.searchsorted(cum, u, side="right"))
    if idx >= len(probs):
        idx = len(probs) - 1
    if probs[idx] <= 0.0:
        nonzero = np.flatnonzero(probs > 0.0)
        below = nonzero[nonzero < idx]
        idx = int(below[-1]) if len(below) else int(nonzero[0])
    return idx


def nucleus_truncate(row: np.ndarray, p: float):
    """Smallest probability-mass-p prefix of the sorted distribution.

    Tokens are sorted by probability descending, ties by vocab order;
    the boundary token that first reaches cumulative mass >= p is
    included, so p=1.0 keeps the whole support.  Returns (kept token
    indices in sorted order, renormalized probabilities over them).
    """
    order = np.lexsort((np.arange(len(row)), -row))
    sorted_p = row[order]
    cum = np.cumsum(sorted_p)
    reached = np.flatnonzero(cum >= p - 1e-12)
    cut = int(reached[0]) if len(reached) else len(row) - 1
    kept = order[: cut + 1]
    kept_p = sorted_p[: cut + 1]
    return kept, kept_p / kept_p.sum()


def _sample_one(model: ToyModel, gen, max_len: int, nucleus_p: float | None):
    eos = model.vocab.eos_index
    content: tuple[int, ...] = ()
    logprob = 0.0
    while True:
        row = next_distribution(model, content)
        if nucleus_p is None:
            kept = None
            probs = row
        else:
            kept, probs = nucleus_truncate(row, nucleus_p)
        cum = np.cumsum(probs)
        u = gen.random()
        pos = _draw_index(probs, cum, u)
        token = pos if kept is None else int(kept[pos])
        if token == eos:
            return Sample(content + (eos,), logprob + math.log(float(probs[pos])), 1, False)
        if len(content) == max_len - 1:
            # no room to extend and still terminate: drop the draw, force eos
            return Sample(content + (eos,), logprob, 1, True)
        content = content + (token,)
        logprob += math.log(float(probs[pos]))


def _merge_samples(samples: list[Sample]) -> list[Sample]:
    merged: dict[tuple, Sample] = {}
    order: list[tuple] = []
    for s in samples:
        key = (s.tokens, s.truncated)
        if key in merged:
            prev = merged[key]
            merged[key] = Sample(prev.tokens, prev.logprob, prev.multiplicity + s.multiplicity, prev.truncated)
        else:
            merged[key] = s
            order.append(key)
    return [merged[key] for key in order]


def ancestral_sample(model: ToyModel, cfg: GenConfig, stream: int = 0) -> list[Sample]:
    """num_samples independent draws from the model's full conditionals."""
    max_len = cfg.max_len if cfg.max_len is not None else model.max_len
    gen = generator_for(cfg.seed, stream)
    samples = [_sample_one(model, gen, max_len, None) for _ in range(cfg.num_samples)]
    return _merge_samples(samples) if cfg.dedup else samples


def nucleus_sample(model: ToyModel, cfg: GenConfig, stream: int = 0) -> list[Sample]:
    """num_samples draws from per-step nucleus-truncated conditionals."""
    max_len = cfg.max_len if cfg.max_len is not None else model.max_len
    gen = generator_for(cfg.seed, stream)
    samples = [
        _sample_one(model, gen, max_len, cfg.nucleus_p) for _ in range(cfg.num_samples)
    ]
    return _merge_samples(samples) if cfg.dedup else samples


def detokenize(model: ToyModel, tokens) -> str:
    """Space-joined text of the content tokens (eos dropped)."""
    eos = model.vocab.eos_index
    return " ".join(model.vocab.tokens[t] for t in tokens if t != eos)


def _entry_for_segment(model, source, seg_id, cfg, reference):
    if cfg.method == "beam":
        hyps = beam_search(model, cfg)
        candidates = [
            Candidate(text=detokenize(model, h.tokens), logprob=h.logprob)
            for h in hyps
        ]
    else:
        sampler = ancestral_sample if cfg.method == "ancestral" else nucleus_sample
        samples = sampler(model, cfg, stream=seg_id)
        candidates = [
            Candidate(
                text=detokenize(model, s.tokens),
                logprob=s.logprob,
                multiplicity=s.multiplicity,
            )
            for s in samples
        ]
    return NBestEntry(
        segment=SourceSegment(id=seg_id, text=source),
        candidates=tuple(candidates),
        references=(reference,) if reference is not None else (),
    )


def build_nbest(
    models: list[ToyModel],
    sources: list[str],
    cfg: GenConfig,
    references: list[str] | None = None,
    ids: list[int] | None = None,
    jobs: int = 1,
) -> list[NBestEntry]:
    """Run the configured method once per segment (stream = segment id).

    Output is identical for any ``jobs`` value; workers only change
    scheduling.
    """
    if len(models) != len(sources):
        raise ValidationError(
            f"{len(models)} models for {len(sources)} sources"
        )
    if references is not None and len(references) != len(sources):
        raise ValidationError(
            f"{len(references)} references for {len(sources)} sources"
        )
    if ids is None:
        ids = list(range(len(sources)))
    refs = references if references is not None else [None] * len(sources)

    def job(i):
        return _entry_for_segment(models[i], sources[i], ids[i], cfg, refs[i])

    indices = range(len(sources))
    if jobs <= 1:
        return [job(i) for i in indices]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(job, indices))
