"""Exactly enumerable order-k categorical sequence models.

A model stores one conditional distribution per observed length-k
context (contexts are left padded with a begin marker) and falls back
to the uniform distribution for unobserved contexts.  Label smoothing
is applied analytically: the smoothed row is the convex mixture
(1 - eps) * empirical + eps * uniform, which is exactly what smoothed
cross-entropy training converges to for a categorical-per-context
model, so no gradient machinery is needed.

Sequences are tuples of token indices ending with the eos index; eos
appears nowhere else.  ``max_len`` bounds total sequence length
including eos.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ValidationError

BEGIN = -1
IMPOSSIBLE = float("-inf")

ENUM_BUDGET_DEFAULT = 10**6


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    eos_index: int

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) < 2:
            raise ValidationError("vocab needs at least 2 symbols")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValidationError("vocab symbols must be unique")
        if not 0 <= self.eos_index < len(self.tokens):
            raise ValidationError(f"eos_index {self.eos_index} out of range")

    def __len__(self) -> int:
        return len(self.tokens)

    def index_of(self, token: str) -> int:
        try:
            return self.tokens.index(token)
        except ValueError:
            raise ValidationError(f"unknown token {token!r}") from None


@dataclass(frozen=True)
class SmoothingConfig:
    epsilon: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError(f"epsilon must be in [0, 1], got {self.epsilon}")


@dataclass(frozen=True)
class ToyModel:
    vocab: Vocab
    order: int
    tables: dict[tuple[int, ...], np.ndarray] = field(repr=False)
    max_len: int = 16

    def __post_init__(self):
        if self.order < 1:
            raise ValidationError("order must be >= 1")
        if self.max_len < 1:
            raise ValidationError("max_len must be >= 1")
        size = len(self.vocab)
        clean = {}
        for ctx, row in self.tables.items():
            row = np.asarray(row, dtype=np.float64)
            if row.shape != (size,):
                raise ValidationError(f"row for context {ctx} has wrong size")
            if np.any(row < 0):
                raise ValidationError(f"row for context {ctx} has negative entries")
            if abs(float(row.sum()) - 1.0) > 1e-12:
                raise ValidationError(f"row for context {ctx} does not sum to 1")
            clean[tuple(int(t) for t in ctx)] = row
        object.__setattr__(self, "tables", clean)

    def context_for(self, prefix) -> tuple[int, ...]:
        padded = [BEGIN] * self.order + list(prefix)
        return tuple(padded[-self.order :])


def _check_sequence(seq, vocab: Vocab, max_len: int | None = None):
    seq = tuple(int(t) for t in seq)
    if max_len is not None and len(seq) > max_len:
        raise ValidationError(f"sequence of length {len(seq)} exceeds max_len {max_len}")
    for t in seq:
        if not 0 <= t < len(vocab):
            raise ValidationError(f"token index {t} out of range")
    if not seq or seq[-1] != vocab.eos_index:
        raise ValidationError("sequence must end with eos")
    if vocab.eos_index in seq[:-1]:
        raise ValidationError("eos may only appear in final position")
    return seq


def train_smoothed(
    sequences,
    order: int,
    smoothing: SmoothingConfig,
    vocab: Vocab,
    max_len: int | None = None,
) -> ToyModel:
    """Count-based model with analytic label smoothing.

    For each observed context c, P(t|c) = (1-eps) * count(c,t)/count(c)
    + eps/|V|.  Unobserved contexts are served uniform at lookup time.
    ``max_len`` defaults to the longest training sequence.
    """
    sequences = [_check_sequence(s, vocab) for s in sequences]
    if not sequences:
        raise ValidationError("training set must be nonempty")
    if order < 1:
        raise ValidationError("order must be >= 1")
    size = len(vocab)
    counts: dict[tuple[int, ...], np.ndarray] = {}
    for seq in sequences:
        padded = [BEGIN] * order + list(seq)
        for pos in range(len(seq)):
            ctx = tuple(padded[pos : pos + order])
            row = counts.get(ctx)
            if row is None:
                row = np.zeros(size, dtype=np.float64)
                counts[ctx] = row
            row[seq[pos]] += 1.0
    eps = smoothing.epsilon
    uniform = eps / size
    tables = {
        ctx: (1.0 - eps) * (row / row.sum()) + uniform for ctx, row in counts.items()
    }
    if max_len is None:
        max_len = max(len(s) for s in sequences)
    return ToyModel(vocab=vocab, order=order, tables=tables, max_len=max_len)


def next_distribution(model: ToyModel, prefix) -> np.ndarray:
    """The conditional distribution after ``prefix`` (uniform if unobserved)."""
    prefix = tuple(int(t) for t in prefix)
    if len(prefix) >= model.max_len:
        raise ValidationError(
            f"prefix of length {len(prefix)} leaves no room under max_len {model.max_len}"
        )
    if model.vocab.eos_index in prefix[:-1]:
        raise ValidationError("prefix contains eos in a non-final position")
    row = model.tables.get(model.context_for(prefix))
    if row is None:
        size = len(model.vocab)
        return np.full(size, 1.0 / size)
    return row


def sequence_logprob(model: ToyModel, seq) -> float:
    """Sum of step log-probabilities; :data:`IMPOSSIBLE` for zero-probability steps."""
    seq = _check_sequence(seq, model.vocab, model.max_len)
    logprob = 0.0
    for pos in range(len(seq)):
        row = next_distribution(model, seq[:pos])
        p = float(row[seq[pos]])
        if p <= 0.0:
            return IMPOSSIBLE
        logprob += math.log(p)
    return logprob


def enumerate_all(
    model: ToyModel,
    max_len: int | None = None,
    budget: int = ENUM_BUDGET_DEFAULT,
) -> list[tuple[tuple[int, ...], float]]:
    """Every eos-terminated sequence of length <= max_len with its logprob.

    Sorted by logprob descending, ties by lexicographic token order.
    Zero-probability sequences are listed with :data:`IMPOSSIBLE`.
    Refuses when |V|^max_len exceeds the budget.
    """
    if max_len is None:
        max_len = model.max_len
    size = len(model.vocab)
    space = size**max_len
    if space > budget:
        raise BudgetError(
            f"enumeration space |V|^max_len = {size}^{max_len} = {space} "
            f"exceeds budget {budget}"
        )
    eos = model.vocab.eos_index
    content_tokens = [t for t in range(size) if t != eos]
    out: list[tuple[tuple[int, ...], float]] = []

    def walk(prefix: tuple[int, ...], logprob: float):
        row = next_distribution(model, prefix)
        p_eos = float(row[eos])
        if logprob == IMPOSSIBLE or p_eos <= 0.0:
            eos_lp = IMPOSSIBLE
        else:
            eos_lp = logprob + math.log(p_eos)
        out.append((prefix + (eos,), eos_lp))
        if len(prefix) + 1 >= max_len:
            return
        for t in content_tokens:
            p = float(row[t])
            if logprob == IMPOSSIBLE or p <= 0.0:
                walk(prefix + (t,), IMPOSSIBLE)
            else:
                walk(prefix + (t,), logprob + math.log(p))

    walk((), 0.0)
    out.sort(key=lambda item: (-item[1], item[0]))
    return out


# -- serialization ---------------------------------------------------------


def model_to_json(model: ToyModel) -> dict:
    return {
        "vocab": list(model.vocab.tokens),
        "eos_index": model.vocab.eos_index,
        "order": model.order,
        "max_len": model.max_len,
        "tables": {
            "|".join(str(t) for t in ctx): [float(p) for p in row]
            for ctx, row in model.tables.items()
        },
    }


def model_from_json(obj: dict) -> ToyModel:
    vocab = Vocab(tuple(obj["vocab"]), int(obj["eos_index"]))
    tables = {
        tuple(int(t) for t in key.split("|")): np.asarray(row, dtype=np.float64)
        for key, row in obj["tables"].items()
    }
    return ToyModel(
        vocab=vocab,
        order=int(obj["order"]),
        tables=tables,
        max_len=int(obj["max_len"]),
    )


def save_model(model: ToyModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model_to_json(model), fh, ensure_ascii=False)
        fh.write("\n")


def load_model(path) -> ToyModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))


def read_corpus(path, vocab: Vocab) -> list[tuple[int, ...]]:
    """Whitespace-tokenized training sequences; eos appended when missing."""
    sequences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tokens = line.split()
            if not tokens:
                continue
            indices = [vocab.index_of(t) for t in tokens]
            if indices[-1] != vocab.eos_index:
                indices.append(vocab.eos_index)
            sequences.append(tuple(indices))
    return sequences


def load_model_dir(path):
    """Load a generation input directory.

    Layout: ``sources.txt`` (one source per line), either a shared
    ``model.json`` or one ``model_<i>.json`` per source line i, and an
    optional ``refs.txt`` aligned with sources.
    Returns (sources, models, references-or-None).
    """
    src_path = os.path.join(path, "sources.txt")
    with open(src_path, encoding="utf-8") as fh:
        sources = [line.rstrip("\r\n") for line in fh]
    shared = os.path.join(path, "model.json")
    if os.path.exists(shared):
        model = load_model(shared)
        models = [model] * len(sources)
    else:
        models = []
        for i in range(len(sources)):
            per_seg = os.path.join(path, f"model_{i}.json")
            if not os.path.exists(per_seg):
                raise ValidationError(
                    f"missing model.json or model_{i}.json in {path}"
                )
            models.append(load_model(per_seg))
    refs_path = os.path.join(path, "refs.txt")
    references = None
    if os.path.exists(refs_path):
        with open(refs_path, encoding="utf-8") as fh:
            references = [line.rstrip("\r\n") for line in fh]
        if len(references) != len(sources):
            raise ValidationError(
                f"refs.txt has {len(references)} lines but sources.txt has {len(sources)}"
            )
    return sources, models, references
