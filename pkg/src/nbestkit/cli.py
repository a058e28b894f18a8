"""Command-line surface: generation, scoring, tuning, decoding, reports.

Every subcommand reads and writes only documented file formats, so any
stage can be replaced by an external tool.  A run's fully-resolved
configuration is serialized next to its output as `key = value` lines;
the same grammar is accepted as an input config file (flags override
file values, which override defaults).

Exit codes: 0 success, 2 validation/parse error, 3 external-scorer
error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import shlex
import sys
from dataclasses import dataclass

from . import generation, toy_model
from .corpus_io import (
    NBestEntry,
    WeightsTable,
    read_lines,
    read_nbest,
    read_weights,
    write_nbest,
    write_weights,
)
from .errors import (
    AlignmentError,
    ParseError,
    ScorerError,
    ToolkitError,
    ValidationError,
)
from .external import ExternalScorer
from .mbr import MbrConfig, mbr_select, two_stage_select
from .mert import (
    MertConfig,
    OBJECTIVE_CORPUS_BLEU,
    OBJECTIVE_MEAN_SCORE,
    bleu_instances,
    mert_optimize,
    score_instances,
)
from .metrics import (
    BLEU_SPEC,
    CHRF_SPEC,
    ExternalScorerConfig,
    MetricSpec,
    REFERENCE_BASED,
    REFERENCE_FREE,
    SufficientStats,
    bleu_stats,
    chrf_counts,
    chrf_from_counts,
    corpus_bleu,
    score_rows,
)
from .rerank import (
    LOGPROB,
    FeatureMatrix,
    Selection,
    extract_features,
    feature_matrix_from_entries,
    read_feature_cache,
    rerank_fixed,
    rerank_tuned,
    write_feature_cache,
)

EXTERNAL_PREFIX = "external:"


# -- metric spec parsing ---------------------------------------------------


def parse_metric(text: str, kind: str) -> MetricSpec:
    """A metric argument: ``bleu``, ``chrf``, ``external:<command>``, or
    ``name=external:<command>`` to label an external scorer."""
    name = None
    if "=" in text and not text.startswith(EXTERNAL_PREFIX):
        name, _, text = text.partition("=")
        if not name:
            raise ValidationError(f"empty metric name in {text!r}")
    if text == "bleu":
        spec = BLEU_SPEC
    elif text == "chrf":
        spec = CHRF_SPEC
    elif text.startswith(EXTERNAL_PREFIX):
        command = tuple(shlex.split(text[len(EXTERNAL_PREFIX) :]))
        if not command:
            raise ValidationError("external metric needs a command")
        spec = MetricSpec(
            name=name or "external",
            kind=kind,
            backend="external",
            external=ExternalScorerConfig(command=command),
        )
    else:
        raise ValidationError(f"unknown metric {text!r}")
    if spec.kind != kind:
        raise ValidationError(
            f"metric {text!r} is {spec.kind}, but this use needs {kind}"
        )
    if name and spec.name != name:
        spec = dataclasses.replace(spec, name=name)
    return spec


def parse_feature_spec(text: str):
    """A rerank feature: ``logprob`` or ``name=external:<command>``."""
    if text == LOGPROB:
        return LOGPROB
    name, sep, rest = text.partition("=")
    if not sep or not name or not rest.startswith(EXTERNAL_PREFIX):
        raise ValidationError(
            f"feature spec {text!r} must be 'logprob' or 'name=external:<command>'"
        )
    return parse_metric(text, REFERENCE_FREE)


def parse_refs(text: str):
    if text == "all":
        return "all"
    try:
        value = int(text)
    except ValueError:
        raise ValidationError(f'--refs must be "all" or a positive integer, got {text!r}') from None
    if value < 1:
        raise ValidationError("--refs must be positive")
    return value


# -- evaluation report and MQM ---------------------------------------------


@dataclass(frozen=True)
class MqmCounts:
    """Severity-bucketed error counts over an annotated corpus."""

    minor: int
    major: int
    critical: int
    num_segments: int

    def __post_init__(self):
        if min(self.minor, self.major, self.critical) < 0:
            raise ValidationError("error counts must be nonnegative")
        if self.num_segments < 1:
            raise ValidationError("num_segments must be positive")


MQM_WEIGHTS = (1, 5, 10)
MQM_NORM_DEFAULT = 25.0


def mqm_score(counts: MqmCounts, norm: float = MQM_NORM_DEFAULT) -> float:
    """Severity-weighted error rate mapped to a 0..100 score.

    Weighted errors W = minor + 5*major + 10*critical; the score is
    100*(1 - W/(norm*num_segments)), floored at 0.  The per-segment
    budget ``norm`` (default 25) is a convention, not a standard; see
    docs/format-spec.md for the worked consistency probe.
    """
    if not (norm > 0):
        raise ValidationError("norm must be positive")
    weighted = (
        MQM_WEIGHTS[0] * counts.minor
        + MQM_WEIGHTS[1] * counts.major
        + MQM_WEIGHTS[2] * counts.critical
    )
    return max(0.0, 100.0 * (1.0 - weighted / (norm * counts.num_segments)))


def eval_report(hyps, refs, srcs, specs) -> list[tuple[str, float]]:
    """Corpus score per metric: BLEU from summed statistics, chrF from
    corpus-aggregated counts, external metrics as mean sentence score."""
    if len(hyps) != len(refs):
        raise AlignmentError(
            f"length mismatch: {len(hyps)} hypotheses vs {len(refs)} references"
        )
    if srcs is not None and len(srcs) != len(hyps):
        raise AlignmentError(
            f"length mismatch: {len(srcs)} sources vs {len(hyps)} hypotheses"
        )
    if not hyps:
        raise ValidationError("empty corpus")
    out = []
    for spec in specs:
        if spec.backend == "builtin_bleu":
            agg = SufficientStats.zero()
            for hyp, ref in zip(hyps, refs):
                agg = agg + bleu_stats(hyp, ref)
            out.append((spec.name, corpus_bleu(agg)))
        elif spec.backend == "builtin_chrf":
            totals = [[0, 0, 0] for _ in range(6)]
            for hyp, ref in zip(hyps, refs):
                for n, (m, ht, rt) in enumerate(chrf_counts(hyp, ref)):
                    totals[n][0] += m
                    totals[n][1] += ht
                    totals[n][2] += rt
            out.append((spec.name, chrf_from_counts([tuple(t) for t in totals])))
        else:
            if spec.kind == REFERENCE_BASED:
                if srcs is None:
                    raise ValidationError(
                        f"external metric {spec.name!r} needs sources"
                    )
                rows = list(zip(srcs, hyps, refs))
            else:
                if srcs is None:
                    raise ValidationError(
                        f"reference-free metric {spec.name!r} needs sources"
                    )
                rows = list(zip(srcs, hyps))
            values = score_rows(spec, rows)
            out.append((spec.name, math.fsum(values) / len(values)))
    return out


# -- output helpers --------------------------------------------------------


def _open_out(path):
    return open(path, "w", encoding="utf-8", newline="\n")


def _write_selections(selections: list[Selection], path) -> None:
    with _open_out(path) as fh:
        fh.write("id\tindex\tscore\tmargin\ttext\n")
        for s in selections:
            fh.write(f"{s.segment_id}\t{s.index}\t{s.score!r}\t{s.margin!r}\t{s.text}\n")


def _write_text(selections: list[Selection], path) -> None:
    with _open_out(path) as fh:
        for s in selections:
            fh.write(s.text + "\n")


def _write_report(rows, txt_path, tsv_path) -> str:
    width = max(len(name) for name, _ in rows)
    text = "".join(f"{name.ljust(width)}  {score:.4f}\n" for name, score in rows)
    with _open_out(txt_path) as fh:
        fh.write(text)
    with _open_out(tsv_path) as fh:
        for name, score in rows:
            fh.write(f"{name}\t{score!r}\n")
    return text


def _pmap(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# -- config files ----------------------------------------------------------


def read_config_file(path) -> dict[str, list[str]]:
    """`key = value` lines; later duplicates append (list-valued keys)."""
    values: dict[str, list[str]] = {}
    for line_no, raw in enumerate(read_lines(path), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep or not key.strip():
            raise ParseError("expected 'key = value'", line_no)
        values.setdefault(key.strip(), []).append(value.strip())
    return values


def _explicit_dests(argv, actions) -> set[str]:
    explicit = set()
    for action in actions:
        for opt in action.option_strings:
            if any(tok == opt or tok.startswith(opt + "=") for tok in argv):
                explicit.add(action.dest)
    return explicit


def _coerce(action, raw: str, key: str):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValidationError(f"config key {key!r}: expected a boolean, got {raw!r}")
    try:
        value = action.type(raw) if action.type else raw
    except (TypeError, ValueError):
        raise ValidationError(f"config key {key!r}: bad value {raw!r}") from None
    if action.choices is not None and value not in action.choices:
        raise ValidationError(
            f"config key {key!r}: {value!r} not in {sorted(action.choices)}"
        )
    return value


def apply_config_file(ns, argv, actions) -> None:
    """Overlay config-file values onto parsed args (flags win)."""
    if not getattr(ns, "config", None):
        return
    file_values = read_config_file(ns.config)
    explicit = _explicit_dests(argv, actions)
    by_dest = {a.dest: a for a in actions}
    for key, raws in file_values.items():
        dest = key.replace("-", "_")
        action = by_dest.get(dest)
        if action is None or dest in ("config", "cmd"):
            raise ValidationError(f"unknown config key {key!r}")
        if dest in explicit:
            continue
        if isinstance(action, argparse._AppendAction):
            setattr(ns, dest, [_coerce(action, raw, key) for raw in raws])
        else:
            setattr(ns, dest, _coerce(action, raws[-1], key))


def write_config_sidecar(ns, actions, out_path) -> None:
    """Serialize the resolved run configuration next to an output."""
    skip = {"cmd", "config", "func", "help"}
    lines = []
    for action in sorted(actions, key=lambda a: a.dest):
        dest = action.dest
        if dest in skip:
            continue
        value = getattr(ns, dest, None)
        if value is None:
            continue
        key = dest.replace("_", "-")
        if isinstance(value, bool):
            lines.append(f"{key} = {'true' if value else 'false'}")
        elif isinstance(value, list):
            lines.extend(f"{key} = {item}" for item in value)
        else:
            lines.append(f"{key} = {value}")
    with _open_out(str(out_path) + ".config") as fh:
        fh.write("\n".join(lines) + "\n")


# -- shared subcommand plumbing --------------------------------------------


def _load_matrix(entries, ns) -> FeatureMatrix:
    if getattr(ns, "features", None):
        matrix = read_feature_cache(ns.features)
        matrix.validate_against(entries)
        return matrix
    return feature_matrix_from_entries(entries)


def _mbr_config(ns, prune_to=None) -> MbrConfig:
    return MbrConfig(
        utility=parse_metric(ns.utility, REFERENCE_BASED),
        include_diagonal=not ns.no_diagonal,
        num_pseudo_refs=parse_refs(ns.refs),
        prune_to=prune_to,
        full_pseudo_refs=getattr(ns, "full_pseudo_refs", False),
    )


def _with_utility_scorer(cfg: MbrConfig, fn):
    """Run ``fn(scorer)`` with one shared external process (or None)."""
    if cfg.utility.backend != "external":
        return fn(None)
    with ExternalScorer(cfg.utility.external, expected_kind=REFERENCE_BASED) as scorer:
        return fn(scorer)


def _selection_outputs(selections, ns) -> None:
    _write_selections(selections, ns.out)
    if getattr(ns, "text_out", None):
        _write_text(selections, ns.text_out)


# -- subcommand handlers ---------------------------------------------------


def _cmd_generate(ns) -> None:
    sources, models, references = toy_model.load_model_dir(ns.model)
    cfg = generation.GenConfig(
        method=ns.method,
        beam_size=ns.beam_size,
        num_samples=ns.samples,
        nucleus_p=ns.p,
        max_len=ns.max_len,
        length_penalty=ns.length_penalty,
        seed=ns.seed,
        dedup=ns.dedup,
    )
    entries = generation.build_nbest(
        models, sources, cfg, references=references, jobs=ns.jobs
    )
    write_nbest(entries, ns.out)


def _cmd_score(ns) -> None:
    if ns.nbest:
        entries = read_nbest(ns.nbest, dedup=ns.dedup)
        specs = [parse_feature_spec(s) for s in (ns.feature_spec or [LOGPROB])]
        matrix = extract_features(entries, specs)
        write_feature_cache(matrix, ns.out)
        return
    if not ns.hyp:
        raise ValidationError("score needs --nbest (feature mode) or --hyp")
    hyps = read_lines(ns.hyp)
    refs = read_lines(ns.ref) if ns.ref else None
    srcs = read_lines(ns.src) if ns.src else None
    kind = REFERENCE_BASED if refs is not None else REFERENCE_FREE
    spec = parse_metric(ns.metric, kind)
    if refs is not None and len(refs) != len(hyps):
        raise AlignmentError(
            f"length mismatch: {len(hyps)} hypotheses vs {len(refs)} references"
        )
    if srcs is not None and len(srcs) != len(hyps):
        raise AlignmentError(
            f"length mismatch: {len(srcs)} sources vs {len(hyps)} hypotheses"
        )
    if ns.level == "corpus":
        rows = eval_report(hyps, refs, srcs, [spec]) if refs is not None else None
        if rows is None:
            raise ValidationError("corpus level needs --ref")
        with _open_out(ns.out) as fh:
            fh.write(f"corpus\t{rows[0][1]!r}\n")
        return
    if spec.kind == REFERENCE_BASED:
        score_input = [
            (srcs[i] if srcs else "", hyps[i], refs[i]) for i in range(len(hyps))
        ]
    else:
        if srcs is None:
            raise ValidationError("reference-free scoring needs --src")
        score_input = list(zip(srcs, hyps))
    values = score_rows(spec, score_input)
    with _open_out(ns.out) as fh:
        for i, value in enumerate(values):
            fh.write(f"{i}\t{value!r}\n")


def _cmd_rerank_fixed(ns) -> None:
    entries = read_nbest(ns.nbest, dedup=ns.dedup)
    matrix = _load_matrix(entries, ns)
    _selection_outputs(rerank_fixed(entries, matrix, ns.feature), ns)


def _cmd_rerank_tuned(ns) -> None:
    entries = read_nbest(ns.nbest, dedup=ns.dedup)
    matrix = _load_matrix(entries, ns)
    weights = read_weights(ns.weights)
    _selection_outputs(rerank_tuned(entries, matrix, weights), ns)


def _parse_objective(ns, entries, matrix):
    if ns.objective == OBJECTIVE_CORPUS_BLEU:
        return OBJECTIVE_CORPUS_BLEU, bleu_instances(entries, matrix)
    if ns.objective.startswith("mean:"):
        spec = parse_metric(ns.objective[len("mean:") :], REFERENCE_BASED)
        return OBJECTIVE_MEAN_SCORE, score_instances(entries, matrix, spec)
    raise ValidationError(
        f"--objective must be corpus_bleu or mean:<metric>, got {ns.objective!r}"
    )


def _cmd_mert(ns) -> None:
    entries = read_nbest(ns.nbest, dedup=ns.dedup)
    matrix = _load_matrix(entries, ns)
    objective, instances = _parse_objective(ns, entries, matrix)
    cfg = MertConfig(
        objective=objective,
        restarts=ns.restarts,
        max_iterations=ns.max_iterations,
        convergence_eps=ns.eps,
        seed=ns.seed,
    )
    result = mert_optimize(instances, cfg, matrix.names)
    if result.degenerate:
        print("warning: degenerate tuning data, keeping initial weights", file=sys.stderr)
    write_weights(result.weights, ns.out)
    with _open_out(str(ns.out) + ".trace.jsonl") as fh:
        for record in result.trace:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(f"objective\t{result.objective_value!r}")


def _cmd_mbr(ns) -> None:
    entries = read_nbest(ns.nbest, dedup=ns.dedup)
    cfg = _mbr_config(ns)
    selections = _with_utility_scorer(
        cfg, lambda scorer: _pmap(lambda e: mbr_select(e, cfg, scorer), entries, ns.jobs)
    )
    _selection_outputs(selections, ns)


def _cmd_eval(ns) -> None:
    hyps = read_lines(ns.hyp)
    refs = read_lines(ns.ref)
    srcs = read_lines(ns.src) if ns.src else None
    specs = [parse_metric(m, REFERENCE_BASED) for m in (ns.metric or ["bleu", "chrf"])]
    rows = eval_report(hyps, refs, srcs, specs)
    text = _write_report(rows, ns.out, str(ns.out) + ".tsv") if ns.out else None
    if text is None:
        width = max(len(name) for name, _ in rows)
        text = "".join(f"{name.ljust(width)}  {score:.4f}\n" for name, score in rows)
    sys.stdout.write(text)


def _cmd_mqm_score(ns) -> None:
    counts = MqmCounts(
        minor=ns.minor,
        major=ns.major,
        critical=ns.critical,
        num_segments=ns.segments,
    )
    score = mqm_score(counts, ns.mqm_norm)
    line = f"mqm\t{score!r}\n"
    if ns.out:
        with _open_out(ns.out) as fh:
            fh.write(line)
    sys.stdout.write(line)


# -- pipeline --------------------------------------------------------------


def _stage(name: str, fn):
    try:
        return fn()
    except OSError as exc:
        raise OSError(f"stage {name}: {exc}") from exc
    except ScorerError as exc:
        raise type(exc)(f"stage {name}: {exc}") from exc
    except ToolkitError as exc:
        raise type(exc)(f"stage {name}: {exc}") from exc


def _infer_rank(ns) -> str:
    if ns.rank:
        return ns.rank
    if ns.prune_to is not None:
        return "two-stage"
    if ns.utility != "bleu" or ns.no_diagonal or ns.refs != "all":
        return "mbr"
    if ns.weights or ns.tune:
        return "tuned"
    return "fixed"


def run_pipeline(ns) -> None:
    """generate -> features -> (mert) -> rank -> eval, all persisted."""
    os.makedirs(ns.out_dir, exist_ok=True)
    out = lambda name: os.path.join(ns.out_dir, name)

    def load_input() -> list[NBestEntry]:
        if ns.model:
            sources, models, references = toy_model.load_model_dir(ns.model)
            cfg = generation.GenConfig(
                method=ns.gen_method,
                beam_size=ns.beam_size,
                num_samples=ns.samples,
                nucleus_p=ns.p,
                max_len=ns.max_len,
                length_penalty=ns.length_penalty,
                seed=ns.seed,
                dedup=ns.dedup,
            )
            entries = generation.build_nbest(
                models, sources, cfg, references=references, jobs=ns.jobs
            )
            write_nbest(entries, out("nbest.jsonl"))
            return entries
        if ns.nbest:
            return read_nbest(ns.nbest, dedup=ns.dedup)
        raise ValidationError("pipeline needs --model or --nbest")

    entries = _stage("generate", load_input)
    rank = _infer_rank(ns)
    if rank not in ("fixed", "tuned", "mbr", "two-stage"):
        raise ValidationError(f"unknown rank method {rank!r}")

    matrix = None
    if rank in ("fixed", "tuned", "two-stage"):

        def extract() -> FeatureMatrix:
            specs = [parse_feature_spec(s) for s in (ns.feature_spec or [LOGPROB])]
            m = extract_features(entries, specs)
            write_feature_cache(m, out("features.jsonl"))
            return m

        matrix = _stage("features", extract)

    weights = None
    if rank in ("tuned", "two-stage"):

        def tune() -> WeightsTable:
            if ns.weights:
                return read_weights(ns.weights)
            if not ns.tune:
                raise ValidationError(f"rank {rank} needs --weights or --tune")
            objective, instances = _parse_objective(ns, entries, matrix)
            cfg = MertConfig(
                objective=objective,
                restarts=ns.restarts,
                max_iterations=ns.max_iterations,
                convergence_eps=ns.eps,
                seed=ns.seed,
            )
            result = mert_optimize(instances, cfg, matrix.names)
            if result.degenerate:
                print(
                    "warning: degenerate tuning data, keeping initial weights",
                    file=sys.stderr,
                )
            write_weights(result.weights, out("weights.tsv"))
            with _open_out(out("mert.trace.jsonl")) as fh:
                for record in result.trace:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            return result.weights

        weights = _stage("mert", tune)

    def rank_stage() -> list[Selection]:
        if rank == "fixed":
            return rerank_fixed(entries, matrix, ns.feature)
        if rank == "tuned":
            return rerank_tuned(entries, matrix, weights)
        if rank == "mbr":
            cfg = _mbr_config(ns)
            return _with_utility_scorer(
                cfg,
                lambda scorer: _pmap(
                    lambda e: mbr_select(e, cfg, scorer), entries, ns.jobs
                ),
            )
        cfg = _mbr_config(ns, prune_to=ns.prune_to)
        return _with_utility_scorer(
            cfg,
            lambda scorer: _pmap(
                lambda e: two_stage_select(e, matrix, weights, cfg, scorer),
                entries,
                ns.jobs,
            ),
        )

    selections = _stage("rank", rank_stage)
    _write_selections(selections, out("selections.tsv"))
    _write_text(selections, out("hyps.txt"))

    if all(entry.references for entry in entries):

        def evaluate() -> str:
            hyps = [s.text for s in selections]
            refs = [entry.references[0] for entry in entries]
            srcs = [entry.segment.text for entry in entries]
            specs = [
                parse_metric(m, REFERENCE_BASED)
                for m in (ns.eval_metric or ["bleu", "chrf"])
            ]
            rows = eval_report(hyps, refs, srcs, specs)
            return _write_report(rows, out("report.txt"), out("report.tsv"))

        sys.stdout.write(_stage("eval", evaluate))
    else:
        print("eval skipped: entries carry no references", file=sys.stderr)


# -- parser ----------------------------------------------------------------


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base RNG seed")
    common.add_argument("--jobs", type=int, default=1, help="worker threads")
    common.add_argument("--config", default=None, help="key = value config file")
    common.add_argument(
        "--dedup",
        action="store_true",
        help="merge duplicate candidates into multiplicities",
    )

    parser = argparse.ArgumentParser(
        prog="nbestkit",
        description="N-best generation, reranking, tuning, and MBR decoding.",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="cmd", required=True)
    parsers = {}

    def add(name, handler, **kwargs):
        p = sub.add_parser(name, parents=[common], allow_abbrev=False, **kwargs)
        p.set_defaults(func=handler, cmd=name)
        parsers[name] = p
        return p

    p = add("generate", _cmd_generate, help="decode candidates from a toy model dir")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--method", choices=generation.METHODS, default="beam")
    p.add_argument("--beam-size", type=int, default=5)
    p.add_argument("--samples", type=int, default=1, help="samples per segment")
    p.add_argument("--p", type=float, default=0.6, help="nucleus mass")
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--length-penalty", type=float, default=0.0)
    p.add_argument("--out", required=True, help="output N-best JSONL")

    p = add("score", _cmd_score, help="sentence/corpus scores, or feature extraction")
    p.add_argument("--metric", default="bleu")
    p.add_argument("--hyp", default=None)
    p.add_argument("--ref", default=None)
    p.add_argument("--src", default=None)
    p.add_argument("--level", choices=("sentence", "corpus"), default="sentence")
    p.add_argument("--nbest", default=None, help="extract features from this N-best")
    p.add_argument(
        "--feature-spec",
        action="append",
        default=None,
        help="logprob or name=external:<cmd>; repeatable",
    )
    p.add_argument("--out", required=True)

    p = add("rerank-fixed", _cmd_rerank_fixed, help="argmax of one feature column")
    p.add_argument("--nbest", required=True)
    p.add_argument("--feature", default=LOGPROB)
    p.add_argument("--features", default=None, help="feature cache JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--text-out", default=None)

    p = add("rerank-tuned", _cmd_rerank_tuned, help="argmax of weighted features")
    p.add_argument("--nbest", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--features", default=None, help="feature cache JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--text-out", default=None)

    p = add("mert", _cmd_mert, help="tune rerank weights by coordinate ascent")
    p.add_argument("--nbest", required=True)
    p.add_argument("--features", default=None, help="feature cache JSONL")
    p.add_argument("--objective", default=OBJECTIVE_CORPUS_BLEU)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--max-iterations", type=int, default=30)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--out", required=True, help="output weights TSV")

    p = add("mbr", _cmd_mbr, help="expected-utility selection")
    p.add_argument("--nbest", required=True)
    p.add_argument("--utility", default="bleu")
    p.add_argument("--refs", default="all", help='pseudo-reference budget: int or "all"')
    p.add_argument("--no-diagonal", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--text-out", default=None)

    p = add("pipeline", run_pipeline, help="generate, tune, rank, and report")
    p.add_argument("--model", default=None, help="toy model directory to decode")
    p.add_argument("--nbest", default=None, help="pregenerated N-best JSONL")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--gen-method", choices=generation.METHODS, default="beam")
    p.add_argument("--beam-size", type=int, default=5)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--p", type=float, default=0.6)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--length-penalty", type=float, default=0.0)
    p.add_argument("--rank", choices=("fixed", "tuned", "mbr", "two-stage"), default=None)
    p.add_argument("--feature", default=LOGPROB, help="column for fixed reranking")
    p.add_argument("--feature-spec", action="append", default=None)
    p.add_argument("--weights", default=None)
    p.add_argument("--tune", action="store_true", help="run MERT on the input entries")
    p.add_argument("--objective", default=OBJECTIVE_CORPUS_BLEU)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--max-iterations", type=int, default=30)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--utility", default="bleu")
    p.add_argument("--refs", default="all")
    p.add_argument("--no-diagonal", action="store_true")
    p.add_argument("--prune-to", type=int, default=None)
    p.add_argument("--full-pseudo-refs", action="store_true")
    p.add_argument("--eval-metric", action="append", default=None)

    p = add("eval", _cmd_eval, help="corpus score report")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--src", default=None)
    p.add_argument("--metric", action="append", default=None)
    p.add_argument("--out", default=None, help="report file (TSV written alongside)")

    p = add("mqm-score", _cmd_mqm_score, help="severity-weighted error score")
    p.add_argument("--minor", type=int, required=True)
    p.add_argument("--major", type=int, required=True)
    p.add_argument("--critical", type=int, required=True)
    p.add_argument("--segments", type=int, required=True)
    p.add_argument("--mqm-norm", type=float, default=MQM_NORM_DEFAULT)
    p.add_argument("--out", default=None)

    return parser, parsers


def _sidecar_target(ns):
    if getattr(ns, "out_dir", None):
        return os.path.join(ns.out_dir, "run")
    return getattr(ns, "out", None)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, parsers = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    actions = parsers[ns.cmd]._actions
    try:
        apply_config_file(ns, argv, actions)
        target = _sidecar_target(ns)
        if target:
            if ns.cmd == "pipeline":
                os.makedirs(ns.out_dir, exist_ok=True)
            write_config_sidecar(ns, actions, target)
        ns.func(ns)
    except ScorerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
