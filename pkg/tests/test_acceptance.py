"""Whole-toolkit checks: metric goldens, selector equivalences, envelope
exactness, sampler statistics, call budgets, pipeline determinism.

Each test prints one ``ACCEPTANCE n: PASS/FAIL`` line so a full run
reads as a scoreboard (visible under ``pytest -s``).
"""

import math
import time

import numpy as np

from nbestkit.cli import main
from nbestkit.corpus_io import WeightsTable, write_nbest
from nbestkit.external import ExternalScorer
from nbestkit.generation import (
    GenConfig,
    ancestral_sample,
    beam_search,
    detokenize,
    nucleus_sample,
)
from nbestkit.mbr import MbrConfig, mbr_select, two_stage_select
from nbestkit.mert import (
    MertConfig,
    MertInstance,
    mert_optimize,
    objective_value,
    upper_envelope,
)
from nbestkit.metrics import (
    ExternalScorerConfig,
    MetricSpec,
    SufficientStats,
    bleu_stats,
    chrf_counts,
    chrf_from_counts,
    corpus_bleu,
    sentence_bleu,
    sentence_chrf,
)
from nbestkit.toy_model import (
    SmoothingConfig,
    Vocab,
    enumerate_all,
    next_distribution,
    save_model,
    train_smoothed,
)

from conftest import STUB, make_entry, random_model, token_text
from oracles import (
    fixture_pairs,
    oracle_corpus_bleu,
    oracle_corpus_chrf,
    oracle_sentence_bleu,
    oracle_sentence_chrf,
)

BLEU = MetricSpec(name="bleu")


def _report(num: int, ok: bool, detail: str = ""):
    line = f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


def run_cli(*argv):
    return main([str(a) for a in argv])


# -- 1: builtin metrics against a from-scratch oracle ----------------------


def test_acceptance_1_metric_goldens():
    start = time.perf_counter()
    pairs = fixture_pairs()
    assert len(pairs) == 50
    bad = 0
    for hyp, ref in pairs:
        if abs(sentence_bleu(hyp, ref) - oracle_sentence_bleu(hyp, ref)) > 1e-4:
            bad += 1
        if abs(sentence_chrf(hyp, ref) - oracle_sentence_chrf(hyp, ref)) > 1e-4:
            bad += 1
    agg = SufficientStats.zero()
    for hyp, ref in pairs:
        agg = agg + bleu_stats(hyp, ref)
    if abs(corpus_bleu(agg) - oracle_corpus_bleu(pairs)) > 1e-4:
        bad += 1
    totals = [[0, 0, 0] for _ in range(6)]
    for hyp, ref in pairs:
        for n, row in enumerate(chrf_counts(hyp, ref)):
            for k in range(3):
                totals[n][k] += row[k]
    if abs(chrf_from_counts([tuple(t) for t in totals]) - oracle_corpus_chrf(pairs)) > 1e-4:
        bad += 1
    texts = {t for pair in pairs for t in pair if t}
    exact = all(
        sentence_bleu(t, t) == 100.0 and sentence_chrf(t, t) == 100.0 for t in texts
    )
    elapsed = time.perf_counter() - start
    _report(1, bad == 0 and exact and elapsed < 1.0, f"{elapsed:.3f}s")


# -- 2: expected-utility selection against the naive double loop -----------


def _naive_mbr_index(entry, value_fn):
    texts = [c.text for c in entry.candidates]
    refs = [c.text for c in entry.candidates for _ in range(c.multiplicity)]
    best, best_val = 0, None
    for i, hyp in enumerate(texts):
        val = math.fsum(value_fn(hyp, r) for r in refs) / len(refs)
        if best_val is None or val > best_val:
            best, best_val = i, val
    return best


def test_acceptance_2_mbr_matches_naive_argmax():
    start = time.perf_counter()
    rng = np.random.default_rng(4202)
    alphabet = ("a", "b")
    exact_cfg = ExternalScorerConfig(command=tuple(STUB) + ("--mode", "exact"))
    exact_spec = MetricSpec(name="exact", backend="external", external=exact_cfg)
    mismatches = 0
    with ExternalScorer(exact_cfg) as scorer:
        for case in range(1000):
            n = int(rng.integers(2, 9))
            texts = [token_text(rng, alphabet, 5) for _ in range(n)]
            mults = None
            if case % 3 == 0:
                mults = [int(m) for m in rng.integers(1, 3, n)]
            entry = make_entry(case, texts, mults=mults)
            sel = mbr_select(entry, MbrConfig(utility=BLEU))
            if sel.index != _naive_mbr_index(entry, sentence_bleu):
                mismatches += 1
            sel = mbr_select(entry, MbrConfig(utility=exact_spec), scorer=scorer)
            want = _naive_mbr_index(
                entry, lambda h, r: 100.0 if h == r else 0.0
            )
            if sel.index != want:
                mismatches += 1
    elapsed = time.perf_counter() - start
    _report(2, mismatches == 0 and elapsed < 10.0,
            f"{mismatches} mismatches, {elapsed:.2f}s")


# -- 3: coordinate-ascent tuning against a dense weight grid ---------------


def _grid_argmax(instances, grid):
    """Best grid point by vectorized corpus BLEU of the argmax selections."""
    g = grid.shape[0]
    agg = np.zeros((g, 10), dtype=np.int64)
    for inst in instances:
        scores = inst.features @ grid.T
        chosen = np.argmax(scores, axis=0)
        stats = np.array([s.as_tuple() for s in inst.stats], dtype=np.int64)
        agg += stats[chosen]
    m = agg[:, 0:4]
    t = agg[:, 4:8]
    hl = agg[:, 8].astype(float)
    rl = agg[:, 9].astype(float)
    ok = (agg[:, 8] > 0) & np.all(m > 0, axis=1) & np.all(t > 0, axis=1)
    score = np.zeros(g)
    if np.any(ok):
        logs = np.log(m[ok] / t[ok]).sum(axis=1)
        bp = np.where(hl[ok] >= rl[ok], 1.0, np.exp(1.0 - rl[ok] / hl[ok]))
        score[ok] = 100.0 * bp * np.exp(logs / 4.0)
    return grid[int(np.argmax(score))]


def test_acceptance_3_mert_reaches_grid_best():
    start = time.perf_counter()
    rng = np.random.default_rng(77)
    alphabet = ("a", "b", "c", "d")
    axis = np.linspace(-1.0, 1.0, 200)
    gw, gv = np.meshgrid(axis, axis, indexing="ij")
    grid = np.column_stack([gw.ravel(), gv.ravel()])
    worst = -math.inf
    for case in range(200):
        instances = []
        for _ in range(int(rng.integers(1, 21))):
            n_cand = int(rng.integers(2, 6))
            ref_toks = [alphabet[int(i)]
                        for i in rng.integers(0, 4, int(rng.integers(4, 9)))]
            texts = []
            for _ in range(n_cand):
                toks = list(ref_toks)
                for _ in range(int(rng.integers(0, 4))):
                    toks[int(rng.integers(0, len(toks)))] = alphabet[int(rng.integers(0, 4))]
                texts.append(" ".join(toks))
            ref = " ".join(ref_toks)
            instances.append(MertInstance(
                features=rng.uniform(-1.0, 1.0, (n_cand, 2)),
                stats=tuple(bleu_stats(t, ref) for t in texts),
            ))
        best_w = _grid_argmax(instances, grid)
        grid_best = objective_value(instances, best_w, "corpus_bleu")
        res = mert_optimize(instances, MertConfig(restarts=12, seed=case))
        worst = max(worst, grid_best - res.objective_value)
    elapsed = time.perf_counter() - start
    _report(3, worst <= 1e-6 and elapsed < 60.0,
            f"max shortfall {worst:.2e}, {elapsed:.1f}s")


# -- 4: envelope interval owners against pointwise argmax ------------------


def test_acceptance_4_envelope_owner_matches_naive():
    rng = np.random.default_rng(99)
    mismatches = 0
    for _ in range(1000):
        k = int(rng.integers(1, 9))
        # slope grid forces collisions; intercept collisions forced below
        slopes = np.round(rng.uniform(-3.0, 3.0, k), 1)
        inters = rng.normal(0.0, 2.0, k)
        if k >= 2 and rng.random() < 0.3:
            j = int(rng.integers(1, k))
            slopes[j] = slopes[0]
            if rng.random() < 0.5:
                inters[j] = inters[0]
        env = upper_envelope(list(zip(inters.tolist(), slopes.tolist())))
        for gamma in rng.uniform(-10.0, 10.0, 100):
            values = inters + gamma * slopes
            if env.owner_at(float(gamma)) != int(np.argmax(values)):
                mismatches += 1
    _report(4, mismatches == 0, f"{mismatches} mismatches over 100000 points")


# -- 5: beam search saturates to exhaustive enumeration --------------------


def test_acceptance_5_beam_saturation_and_monotonicity():
    rng = np.random.default_rng(1234)
    failures = 0
    for _ in range(100):
        vocab_size = int(rng.integers(2, 4))
        max_len = int(rng.integers(2, 5))
        model = random_model(rng, vocab_size, max_len)
        space = enumerate_all(model, max_len=max_len)
        beams = [
            beam_search(model, GenConfig(beam_size=w, max_len=max_len))
            for w in range(1, len(space) + 1)
        ]
        if beams[-1][0].tokens != space[0][0]:
            failures += 1
        best = [b[0].score for b in beams]
        if any(b2 < b1 for b1, b2 in zip(best, best[1:])):
            failures += 1
    _report(5, failures == 0, "100 random models")


# -- 6: nucleus sampling limit behavior ------------------------------------

# upper chi-square quantiles at significance 0.001
CHI2_001 = {1: 10.8276, 2: 13.8155, 3: 16.2662, 4: 18.4668, 5: 20.5150}


def test_acceptance_6_nucleus_limits():
    vocab = Vocab(("a", "b", "</s>"), eos_index=2)
    seqs = [(0, 1, 2), (0, 0, 2), (1, 0, 2), (0, 1, 2), (1, 2)]
    model = train_smoothed(seqs, order=1, smoothing=SmoothingConfig(0.1),
                           vocab=vocab, max_len=4)
    row = next_distribution(model, ())
    draws = nucleus_sample(
        model, GenConfig(num_samples=100_000, nucleus_p=1.0, seed=5, dedup=False)
    )
    counts = np.zeros(len(row))
    for s in draws:
        counts[s.tokens[0]] += 1
    expected = row * len(draws)
    stat = float(((counts - expected) ** 2 / expected).sum())
    ok_chi = stat < CHI2_001[len(row) - 1]

    ctx = ()
    top_probs = []
    while True:
        r = next_distribution(model, ctx)
        top = int(np.argmax(r))
        top_probs.append(float(r[top]))
        if top == vocab.eos_index or len(ctx) == model.max_len - 1:
            greedy = ctx + (vocab.eos_index,)
            break
        ctx = ctx + (top,)
    p_low = 0.95 * min(top_probs)
    low = nucleus_sample(
        model, GenConfig(num_samples=2000, nucleus_p=p_low, seed=9, dedup=False)
    )
    all_greedy = all(s.tokens == greedy for s in low)
    _report(6, ok_chi and all_greedy, f"chi-square {stat:.2f}")


# -- 7: two-stage selection at its degenerate settings ---------------------


def test_acceptance_7_two_stage_degenerate_ends():
    from nbestkit.rerank import feature_matrix_from_entries, rerank_tuned

    rng = np.random.default_rng(31)
    alphabet = ("a", "b", "c")
    bad = 0
    for case in range(100):
        n = int(rng.integers(2, 9))
        texts = [token_text(rng, alphabet, 6, allow_empty=False) for _ in range(n)]
        entry = make_entry(
            case,
            texts,
            logprobs=[float(v) for v in rng.uniform(-6.0, 0.0, n)],
            features=[{"q": float(rng.normal())} for _ in range(n)],
        )
        fm = feature_matrix_from_entries([entry])
        weights = WeightsTable(
            {"logprob": float(rng.normal()), "q": float(rng.normal())}
        )
        plain = mbr_select(entry, MbrConfig(utility=BLEU))
        full = two_stage_select(entry, fm, weights, MbrConfig(utility=BLEU, prune_to=n))
        if full != plain:
            bad += 1
        tuned = rerank_tuned([entry], fm, weights)[0]
        single = two_stage_select(entry, fm, weights, MbrConfig(utility=BLEU, prune_to=1))
        if (single.index, single.text) != (tuned.index, tuned.text):
            bad += 1
    _report(7, bad == 0, "100 instances")


# -- 8: oracle-feature reranking improves with list size -------------------


def test_acceptance_8_fixed_rerank_trend():
    from nbestkit.rerank import feature_matrix_from_entries, rerank_fixed

    rng = np.random.default_rng(2024)
    alphabet = ("a", "b", "c")
    vocab = Vocab(("a", "b", "c", "</s>"), eos_index=3)
    sizes = (1, 5, 20, 50, 100, 200)
    models, refs = [], []
    for _ in range(50):
        length = int(rng.integers(5, 8))
        ref_seq = tuple(int(t) for t in rng.integers(0, 3, length)) + (3,)
        variant = list(ref_seq[:-1])
        for _ in range(2):
            variant[int(rng.integers(0, length))] = int(rng.integers(0, 3))
        var_seq = tuple(variant) + (3,)
        # order 2 keeps eos mass on the true final bigram, so the beam
        # reproduces the corrupted variant instead of stopping early; the
        # reference survives only in the sample cloud
        models.append(train_smoothed(
            [var_seq] * 4 + [ref_seq], order=2,
            smoothing=SmoothingConfig(0.05), vocab=vocab, max_len=length + 3,
        ))
        refs.append(" ".join(alphabet[t] for t in ref_seq[:-1]))

    pools = [
        [
            (detokenize(model, s.tokens), s.logprob)
            for s in ancestral_sample(
                model, GenConfig(num_samples=200, seed=7, dedup=False), stream=seg
            )
        ]
        for seg, model in enumerate(models)
    ]
    scores = []
    for n in sizes:
        entries = []
        for seg, pool in enumerate(pools):
            cut = pool[:n]
            entries.append(make_entry(
                seg,
                [text for text, _ in cut],
                logprobs=[lp for _, lp in cut],
                features=[{"oracle": sentence_bleu(text, refs[seg])}
                          for text, _ in cut],
            ))
        fm = feature_matrix_from_entries(entries)
        agg = SufficientStats.zero()
        for sel, ref in zip(rerank_fixed(entries, fm, "oracle"), refs):
            agg = agg + bleu_stats(sel.text, ref)
        scores.append(corpus_bleu(agg))

    agg = SufficientStats.zero()
    for model, ref in zip(models, refs):
        top = beam_search(model, GenConfig(beam_size=5))[0]
        agg = agg + bleu_stats(detokenize(model, top.tokens), ref)
    baseline = corpus_bleu(agg)

    monotone = all(b >= a for a, b in zip(scores, scores[1:]))
    _report(8, monotone and scores[-1] > baseline,
            f"bleu {scores[0]:.1f}->{scores[-1]:.1f}, beam-5 {baseline:.1f}")


# -- 9: label smoothing degrades sampled expected-utility decoding ---------


def test_acceptance_9_smoothing_hurts_sampled_mbr():
    rng = np.random.default_rng(555)
    alphabet = ("a", "b", "c")
    vocab = Vocab(("a", "b", "c", "</s>"), eos_index=3)
    smooth, sharp, refs = [], [], []
    for _ in range(10):
        length = int(rng.integers(5, 8))
        ref_seq = tuple(int(t) for t in rng.integers(0, 3, length)) + (3,)
        variant = list(ref_seq[:-1])
        variant[int(rng.integers(0, length))] = int(rng.integers(0, 3))
        train = [ref_seq, ref_seq, tuple(variant) + (3,)]
        for eps, dest in ((0.0, sharp), (0.1, smooth)):
            dest.append(train_smoothed(
                train, order=1, smoothing=SmoothingConfig(eps), vocab=vocab,
                max_len=length + 3,
            ))
        refs.append(" ".join(alphabet[t] for t in ref_seq[:-1]))

    def corpus_for(models, seed):
        agg = SufficientStats.zero()
        for seg, (model, ref) in enumerate(zip(models, refs)):
            samples = ancestral_sample(
                model, GenConfig(num_samples=100, seed=seed, dedup=True), stream=seg
            )
            entry = make_entry(
                seg,
                [detokenize(model, s.tokens) for s in samples],
                mults=[s.multiplicity for s in samples],
            )
            agg = agg + bleu_stats(mbr_select(entry, MbrConfig(utility=BLEU)).text, ref)
        return corpus_bleu(agg)

    diffs = [corpus_for(sharp, seed) - corpus_for(smooth, seed)
             for seed in range(20)]
    mean = sum(diffs) / len(diffs)
    _report(9, mean > 0.0, f"mean corpus-bleu gap {mean:.2f} over 20 seeds")


# -- 10: scorer call budgets -----------------------------------------------


def test_acceptance_10_call_budgets(tmp_path):
    n, k, m = 6, 2, 3
    rng = np.random.default_rng(8)
    texts = []
    while len(texts) < n:
        text = token_text(rng, ("a", "b", "c"), 6, allow_empty=False)
        if text not in texts:
            texts.append(text)
    entry = make_entry(0, texts, logprobs=[float(v) for v in rng.uniform(-6.0, 0.0, n)])
    nbest = tmp_path / "nbest.jsonl"
    write_nbest([entry], nbest)

    plain_log = tmp_path / "plain.log"
    code = run_cli(
        "mbr", "--nbest", nbest, "--out", tmp_path / "mbr.tsv",
        "--utility",
        "external:" + " ".join(STUB + ["--mode", "exact", "--log-file", str(plain_log)]),
    )
    assert code == 0
    plain_calls = len(plain_log.read_text(encoding="utf-8").splitlines())

    feat_log = tmp_path / "features.log"
    util_log = tmp_path / "utility.log"
    weights = tmp_path / "weights.tsv"
    weights.write_text("q0\t1.0\nq1\t-0.5\n", encoding="utf-8")
    specs = [
        f"q{i}=external:" + " ".join(
            STUB + ["--mode", "hyplen", "--kind", "noref",
                    "--log-file", str(feat_log)]
        )
        for i in range(k)
    ]
    code = run_cli(
        "pipeline", "--nbest", nbest, "--out-dir", tmp_path / "run",
        "--feature-spec", specs[0], "--feature-spec", specs[1],
        "--weights", weights, "--prune-to", m,
        "--utility",
        "external:" + " ".join(STUB + ["--mode", "exact", "--log-file", str(util_log)]),
    )
    assert code == 0
    feat_calls = len(feat_log.read_text(encoding="utf-8").splitlines())
    util_calls = len(util_log.read_text(encoding="utf-8").splitlines())
    ok = plain_calls == n * n and feat_calls == k * n and util_calls == m * m
    _report(10, ok,
            f"plain {plain_calls}={n}^2, features {feat_calls}={k}*{n}, "
            f"pruned {util_calls}={m}^2")


# -- 11: pipeline reruns are byte-identical --------------------------------


def test_acceptance_11_pipeline_determinism(tmp_path):
    vocab = Vocab(("a", "b", "</s>"), eos_index=2)
    seqs = [(0, 1, 2), (0, 1, 0, 2), (1, 2), (0, 2), (1, 0, 2)]
    model = train_smoothed(seqs, order=1, smoothing=SmoothingConfig(0.2),
                           vocab=vocab, max_len=5)
    mdir = tmp_path / "model"
    mdir.mkdir()
    save_model(model, mdir / "model.json")
    (mdir / "sources.txt").write_text("s0\ns1\ns2\n", encoding="utf-8")
    (mdir / "refs.txt").write_text("a b\na\nb a\n", encoding="utf-8")

    outs = []
    for name, jobs in (("run_a", 1), ("run_b", 1), ("run_j", 4)):
        out = tmp_path / name
        code = run_cli(
            "pipeline", "--model", mdir, "--out-dir", out,
            "--gen-method", "ancestral", "--samples", "40", "--seed", "3",
            "--jobs", jobs, "--rank", "mbr", "--utility", "bleu",
        )
        assert code == 0
        outs.append(out)

    def artifacts(out):
        return sorted(p.name for p in out.iterdir() if not p.name.endswith(".config"))

    names = artifacts(outs[0])
    assert names == artifacts(outs[1]) == artifacts(outs[2])
    assert "report.txt" in names
    rerun_same = all(
        (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in names
    )
    jobs_same = all(
        (outs[0] / f).read_bytes() == (outs[2] / f).read_bytes() for f in names
    )
    # sidecars record their own out-dir; everything else must agree
    sidecars = []
    for out in outs[:2]:
        body = (out / "run.config").read_text(encoding="utf-8")
        sidecars.append([l for l in body.splitlines() if not l.startswith("out-dir")])
    _report(11, rerun_same and jobs_same and sidecars[0] == sidecars[1],
            f"{len(names)} artifacts compared")
