"""Minimum error rate training for linear reranking weights.

Coordinate ascent with an exact line search: along one weight
coordinate, every candidate's score is a line in the step parameter, so
the corpus objective is piecewise constant and can be evaluated exactly
on every interval of the merged per-segment upper envelopes.  Random
restarts guard against local optima.

Two corpus objectives are supported: ``corpus_bleu`` (sufficient
statistics summed over chosen candidates) and ``mean_sentence_score``
(average of precomputed per-candidate scores, the form needed when
tuning toward an external sentence-level metric).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus_io import NBestEntry, WeightsTable
from .errors import ValidationError
from .metrics import (
    MetricSpec,
    REFERENCE_BASED,
    SufficientStats,
    bleu_stats,
    corpus_bleu,
    score_rows,
)
from .rerank import FeatureMatrix, LOGPROB

OBJECTIVE_CORPUS_BLEU = "corpus_bleu"
OBJECTIVE_MEAN_SCORE = "mean_sentence_score"
OBJECTIVES = (OBJECTIVE_CORPUS_BLEU, OBJECTIVE_MEAN_SCORE)


@dataclass(frozen=True)
class MertInstance:
    """One segment's tuning data: feature rows plus per-candidate quality.

    ``stats`` feeds the corpus_bleu objective; ``scores`` feeds
    mean_sentence_score.  Either may be present; the chosen objective
    decides which one is required.
    """

    features: np.ndarray
    stats: tuple[SufficientStats, ...] | None = None
    scores: np.ndarray | None = None

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise ValidationError("instance needs a nonempty 2-D feature block")
        n = self.features.shape[0]
        if self.stats is not None and len(self.stats) != n:
            raise ValidationError("one SufficientStats per candidate required")
        if self.scores is not None and len(self.scores) != n:
            raise ValidationError("one score per candidate required")
        if self.stats is None and self.scores is None:
            raise ValidationError("instance needs stats or scores")


@dataclass(frozen=True)
class Envelope:
    """Upper envelope of lines a_i + γ·b_i over the whole real axis.

    ``owners[t]`` is the argmax line index on the t-th interval;
    interval t spans (breakpoints[t-1], breakpoints[t]).
    """

    breakpoints: np.ndarray
    owners: np.ndarray

    def __post_init__(self):
        if len(self.owners) != len(self.breakpoints) + 1:
            raise ValidationError("owner count must be breakpoint count + 1")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValidationError("breakpoints must be strictly increasing")

    def owner_at(self, gamma: float) -> int:
        j = int(np.searchsorted(self.breakpoints, gamma, side="left"))
        if j < len(self.breakpoints) and gamma == self.breakpoints[j]:
            # both neighbors attain the max exactly at a breakpoint
            return int(min(self.owners[j], self.owners[j + 1]))
        return int(self.owners[j])


@dataclass(frozen=True)
class MertConfig:
    objective: str = OBJECTIVE_CORPUS_BLEU
    restarts: int = 8
    max_iterations: int = 30
    convergence_eps: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValidationError(f"unknown objective {self.objective!r}")
        if self.restarts < 1 or self.max_iterations < 1:
            raise ValidationError("restarts and max_iterations must be positive")
        if not (self.convergence_eps > 0):
            raise ValidationError("convergence_eps must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be nonnegative")


@dataclass
class MertResult:
    weights: WeightsTable
    objective_value: float
    trace: list[dict] = field(default_factory=list)
    degenerate: bool = False


def upper_envelope(lines) -> Envelope:
    """Envelope of ``(intercept, slope)`` lines; interval ties go to the
    lowest line index, computed by the sorted-slope hull sweep."""
    if not lines:
        raise ValidationError("upper_envelope needs at least one line")
    a = np.array([ln[0] for ln in lines], dtype=float)
    b = np.array([ln[1] for ln in lines], dtype=float)
    order = sorted(range(len(lines)), key=lambda i: (b[i], -a[i], i))
    # one survivor per slope: the highest intercept, then lowest index
    survivors = []
    for i in order:
        if survivors and b[survivors[-1]] == b[i]:
            continue
        survivors.append(i)
    hull: list[tuple[int, float]] = []  # (line index, left end of its interval)
    for i in survivors:
        x_new = -math.inf
        while hull:
            top, top_x = hull[-1]
            x_new = (a[top] - a[i]) / (b[i] - b[top])
            if x_new <= top_x:
                hull.pop()
            else:
                break
        hull.append((i, x_new if hull else -math.inf))
    owners = np.array([i for i, _ in hull], dtype=np.int64)
    breakpoints = np.array([x for _, x in hull[1:]], dtype=float)
    return Envelope(breakpoints, owners)


def _require(instances, objective):
    if not instances:
        raise ValidationError("no tuning instances")
    if objective not in OBJECTIVES:
        raise ValidationError(f"unknown objective {objective!r}")
    for inst in instances:
        if objective == OBJECTIVE_CORPUS_BLEU and inst.stats is None:
            raise ValidationError("corpus_bleu objective requires stats")
        if objective == OBJECTIVE_MEAN_SCORE and inst.scores is None:
            raise ValidationError("mean_sentence_score objective requires scores")


def _argmax_lowest(scores: np.ndarray) -> int:
    return int(np.argmax(scores))


def objective_value(instances, weights: np.ndarray, objective: str) -> float:
    """Corpus objective of the argmax selection under ``weights``."""
    _require(instances, objective)
    if objective == OBJECTIVE_CORPUS_BLEU:
        agg = SufficientStats.zero()
        for inst in instances:
            agg = agg + inst.stats[_argmax_lowest(inst.features @ weights)]
        return corpus_bleu(agg)
    chosen = [
        float(inst.scores[_argmax_lowest(inst.features @ weights)])
        for inst in instances
    ]
    return math.fsum(chosen) / len(chosen)


def _stat_vectors(instances) -> list[np.ndarray]:
    return [
        np.array([s.as_tuple() for s in inst.stats], dtype=np.int64)
        for inst in instances
    ]


def line_search(instances, weights: np.ndarray, k: int, objective: str):
    """Exact search over the k-th weight; returns (best value of w_k,
    corpus objective there).

    Per segment each candidate traces the line a_i + γ·b_i with
    a_i computed from the other weights and b_i its k-th feature.  The
    merged envelope breakpoints cut the axis into intervals on which the
    selection is constant; the objective is swept incrementally and the
    midpoint of the best interval wins (outer intervals probe one unit
    beyond the end).  With no breakpoints the objective is constant and
    γ=0 is returned.
    """
    _require(instances, objective)
    masked = weights.copy()
    masked[k] = 0.0
    use_stats = objective == OBJECTIVE_CORPUS_BLEU
    envs = []
    for inst in instances:
        a = inst.features @ masked
        b = inst.features[:, k]
        envs.append(upper_envelope(list(zip(a, b))))
    events: list[tuple[float, int, int]] = []
    for s, env in enumerate(envs):
        for bp, new_owner in zip(env.breakpoints, env.owners[1:]):
            events.append((float(bp), s, int(new_owner)))
    events.sort(key=lambda t: t[0])

    owners = [int(env.owners[0]) for env in envs]
    if use_stats:
        vecs = _stat_vectors(instances)
        agg = np.zeros(10, dtype=np.int64)
        for s, inst in enumerate(instances):
            agg += vecs[s][owners[s]]

        def current() -> float:
            return corpus_bleu(SufficientStats.from_tuple(agg))

        def swap(s: int, old: int, new: int) -> None:
            np.subtract(agg, vecs[s][old], out=agg)
            np.add(agg, vecs[s][new], out=agg)

    else:
        score_sum = math.fsum(
            float(inst.scores[owners[s]]) for s, inst in enumerate(instances)
        )
        state = [score_sum]

        def current() -> float:
            return state[0] / len(instances)

        def swap(s: int, old: int, new: int) -> None:
            state[0] += float(instances[s].scores[new]) - float(instances[s].scores[old])

    if not events:
        return 0.0, objective_value(instances, masked, objective)

    cuts = sorted({g for g, _, _ in events})
    best_value = current()
    best_interval = 0
    pos = 0
    for t, gamma in enumerate(cuts):
        while pos < len(events) and events[pos][0] == gamma:
            _, s, new = events[pos]
            swap(s, owners[s], new)
            owners[s] = new
            pos += 1
        value = current()
        if value > best_value:
            best_value = value
            best_interval = t + 1
    if best_interval == 0:
        best_gamma = cuts[0] - 1.0
    elif best_interval == len(cuts):
        best_gamma = cuts[-1] + 1.0
    else:
        best_gamma = 0.5 * (cuts[best_interval - 1] + cuts[best_interval])
    final = weights.copy()
    final[k] = best_gamma
    return best_gamma, objective_value(instances, final, objective)


def _degenerate(instances) -> bool:
    return all(np.all(inst.features == inst.features[0]) for inst in instances)


def _initial_weights(num_features: int, names) -> np.ndarray:
    w = np.zeros(num_features, dtype=float)
    idx = 0
    if names is not None and LOGPROB in names:
        idx = list(names).index(LOGPROB)
    w[idx] = 1.0
    return w


def mert_optimize(instances, cfg: MertConfig, feature_names=None) -> MertResult:
    """Coordinate-ascent tuning over all instances.

    Restart 0 starts from weight 1 on the logprob column (the baseline
    ranking); further restarts start uniform in [−1,1]^K from
    independent seeded streams.  A coordinate step is accepted only when
    it improves the objective by more than ``convergence_eps``; a full
    cycle with no accepted step ends the restart.  The best restart's
    weights are returned L2-normalized (normalization is skipped in the
    degenerate case where rescaling would perturb the achieved value).
    """
    from .rng import generator_for

    _require(instances, cfg.objective)
    num_features = instances[0].features.shape[1]
    for inst in instances:
        if inst.features.shape[1] != num_features:
            raise ValidationError("instances disagree on feature count")
    if feature_names is None:
        names = tuple(f"f{k}" for k in range(num_features))
    else:
        names = tuple(feature_names)
        if len(names) != num_features:
            raise ValidationError("feature_names length must match feature count")

    init = _initial_weights(num_features, names)
    if _degenerate(instances):
        return MertResult(
            weights=WeightsTable(dict(zip(names, init))),
            objective_value=objective_value(instances, init, cfg.objective),
            degenerate=True,
        )

    trace: list[dict] = []
    best: tuple[float, int, np.ndarray] | None = None
    for r in range(cfg.restarts):
        if r == 0:
            w = init.copy()
        else:
            w = generator_for(cfg.seed, r).uniform(-1.0, 1.0, num_features)
        value = objective_value(instances, w, cfg.objective)
        for iteration in range(cfg.max_iterations):
            accepted = False
            for k in range(num_features):
                gamma, candidate = line_search(instances, w, k, cfg.objective)
                if candidate > value + cfg.convergence_eps:
                    w[k] = gamma
                    value = candidate
                    accepted = True
                    trace.append(
                        {
                            "restart": r,
                            "iteration": iteration,
                            "coordinate": names[k],
                            "gamma": gamma,
                            "objective": value,
                        }
                    )
            if not accepted:
                break
        if best is None or value > best[0]:
            best = (value, r, w.copy())

    assert best is not None
    best_value, _, best_w = best
    norm = float(np.linalg.norm(best_w))
    if norm > 0:
        normalized = best_w / norm
        if objective_value(instances, normalized, cfg.objective) == best_value:
            best_w = normalized
    return MertResult(
        weights=WeightsTable(dict(zip(names, (float(v) for v in best_w)))),
        objective_value=best_value,
        trace=trace,
    )


def bleu_instances(entries: list[NBestEntry], matrix: FeatureMatrix) -> list[MertInstance]:
    """Instances for the corpus_bleu objective; references come from the
    entries (first reference, single-reference scoring)."""
    matrix.validate_against(entries)
    instances = []
    for entry, block in zip(entries, matrix.blocks):
        if not entry.references:
            raise ValidationError(
                f"segment {entry.segment.id} has no reference for tuning"
            )
        ref = entry.references[0]
        stats = tuple(bleu_stats(c.text, ref) for c in entry.candidates)
        instances.append(MertInstance(features=block, stats=stats))
    return instances


def score_instances(
    entries: list[NBestEntry], matrix: FeatureMatrix, spec: MetricSpec
) -> list[MertInstance]:
    """Instances for mean_sentence_score: every candidate pre-scored once
    under ``spec`` (batched corpus-wide), so tuning never calls scorers."""
    matrix.validate_against(entries)
    rows = []
    for entry in entries:
        for cand in entry.candidates:
            if spec.kind == REFERENCE_BASED:
                if not entry.references:
                    raise ValidationError(
                        f"segment {entry.segment.id} has no reference for tuning"
                    )
                rows.append((entry.segment.text, cand.text, entry.references[0]))
            else:
                rows.append((entry.segment.text, cand.text))
    values = score_rows(spec, rows)
    instances = []
    pos = 0
    for entry, block in zip(entries, matrix.blocks):
        n = len(entry.candidates)
        instances.append(
            MertInstance(features=block, scores=np.array(values[pos : pos + n]))
        )
        pos += n
    return instances
