"""N-best reranking, MERT tuning, and Monte-Carlo MBR for toy MT decoding."""

from .corpus_io import (
    Candidate,
    NBestEntry,
    SourceSegment,
    WeightsTable,
    dedup_candidates,
    read_nbest,
    read_parallel,
    read_weights,
    write_nbest,
    write_weights,
)
from .errors import (
    AlignmentError,
    BudgetError,
    ParseError,
    ScorerCrashError,
    ScorerError,
    ScorerProtocolError,
    ScorerTimeoutError,
    ToolkitError,
    ValidationError,
)
from .external import ExternalScorer, external_score
from .generation import (
    BeamHypothesis,
    GenConfig,
    Sample,
    ancestral_sample,
    beam_search,
    build_nbest,
    detokenize,
    nucleus_sample,
    nucleus_truncate,
)
from .mbr import (
    MbrConfig,
    UtilityMatrix,
    expected_utilities,
    mbr_select,
    two_stage_select,
    utility_matrix,
)
from .mert import (
    Envelope,
    MertConfig,
    MertInstance,
    MertResult,
    bleu_instances,
    line_search,
    mert_optimize,
    objective_value,
    score_instances,
    upper_envelope,
)
from .metrics import (
    BLEU_SPEC,
    CHRF_SPEC,
    ExternalScorerConfig,
    MetricSpec,
    SufficientStats,
    bleu_stats,
    chrf_counts,
    chrf_from_counts,
    corpus_bleu,
    metric_fn,
    score_rows,
    sentence_bleu,
    sentence_bleu_from_stats,
    sentence_chrf,
    tokenize_13a,
)
from .rerank import (
    FeatureMatrix,
    Selection,
    extract_features,
    feature_matrix_from_entries,
    read_feature_cache,
    rerank_fixed,
    rerank_tuned,
    weight_vector,
    write_feature_cache,
)
from .rng import generator_for
from .toy_model import (
    SmoothingConfig,
    ToyModel,
    Vocab,
    enumerate_all,
    load_model,
    load_model_dir,
    save_model,
    sequence_logprob,
    train_smoothed,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "BLEU_SPEC",
    "BeamHypothesis",
    "BudgetError",
    "CHRF_SPEC",
    "Candidate",
    "Envelope",
    "ExternalScorer",
    "ExternalScorerConfig",
    "FeatureMatrix",
    "GenConfig",
    "MbrConfig",
    "MertConfig",
    "MertInstance",
    "MertResult",
    "MetricSpec",
    "NBestEntry",
    "ParseError",
    "Sample",
    "ScorerCrashError",
    "ScorerError",
    "ScorerProtocolError",
    "ScorerTimeoutError",
    "Selection",
    "SmoothingConfig",
    "SourceSegment",
    "SufficientStats",
    "ToolkitError",
    "ToyModel",
    "UtilityMatrix",
    "ValidationError",
    "Vocab",
    "WeightsTable",
    "ancestral_sample",
    "beam_search",
    "bleu_instances",
    "bleu_stats",
    "build_nbest",
    "chrf_counts",
    "chrf_from_counts",
    "corpus_bleu",
    "dedup_candidates",
    "detokenize",
    "enumerate_all",
    "expected_utilities",
    "external_score",
    "extract_features",
    "feature_matrix_from_entries",
    "generator_for",
    "line_search",
    "load_model",
    "load_model_dir",
    "mbr_select",
    "mert_optimize",
    "metric_fn",
    "nucleus_sample",
    "nucleus_truncate",
    "objective_value",
    "read_feature_cache",
    "read_nbest",
    "read_parallel",
    "read_weights",
    "rerank_fixed",
    "rerank_tuned",
    "save_model",
    "score_instances",
    "score_rows",
    "sentence_bleu",
    "sentence_bleu_from_stats",
    "sentence_chrf",
    "sequence_logprob",
    "tokenize_13a",
    "train_smoothed",
    "two_stage_select",
    "upper_envelope",
    "utility_matrix",
    "weight_vector",
    "write_feature_cache",
    "write_nbest",
    "write_weights",
]
