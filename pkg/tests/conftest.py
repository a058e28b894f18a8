import os
import sys

import numpy as np
import pytest

from nbestkit import (
    Candidate,
    NBestEntry,
    SmoothingConfig,
    SourceSegment,
    ToyModel,
    Vocab,
    train_smoothed,
)

TESTS_DIR = os.path.dirname(os.path.abspath(__file__))
STUB = [sys.executable, os.path.join(TESTS_DIR, "stub_scorer.py")]


def stub_command(*args: str) -> tuple[str, ...]:
    return tuple(STUB) + args


@pytest.fixture
def abc_vocab() -> Vocab:
    return Vocab(("a", "b", "</s>"), eos_index=2)


@pytest.fixture
def small_model(abc_vocab) -> ToyModel:
    seqs = [(0, 1, 2), (0, 0, 2), (1, 2), (0, 1, 2), (1, 0, 2)]
    return train_smoothed(
        seqs, order=1, smoothing=SmoothingConfig(0.1), vocab=abc_vocab, max_len=4
    )


def random_model(rng, vocab_size: int, max_len: int, order: int = 1) -> ToyModel:
    """Order-1 model with a Dirichlet row per reachable context."""
    tokens = tuple(f"t{i}" for i in range(vocab_size - 1)) + ("</s>",)
    vocab = Vocab(tokens, eos_index=vocab_size - 1)
    contexts = [(-1,)] + [(t,) for t in range(vocab_size) if t != vocab.eos_index]
    tables = {}
    for ctx in contexts:
        row = rng.dirichlet(np.ones(vocab_size))
        tables[ctx] = row / row.sum()
    return ToyModel(vocab=vocab, order=order, tables=tables, max_len=max_len)


def make_entry(seg_id: int, texts, logprobs=None, mults=None, refs=(), src=None,
               features=None):
    candidates = []
    for i, text in enumerate(texts):
        candidates.append(
            Candidate(
                text=text,
                logprob=None if logprobs is None else logprobs[i],
                multiplicity=1 if mults is None else mults[i],
                features={} if features is None else dict(features[i]),
            )
        )
    return NBestEntry(
        segment=SourceSegment(id=seg_id, text=f"src {seg_id}" if src is None else src),
        candidates=tuple(candidates),
        references=tuple(refs),
    )


def token_text(rng, alphabet, max_len: int, allow_empty: bool = True) -> str:
    low = 0 if allow_empty else 1
    length = int(rng.integers(low, max_len + 1))
    return " ".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), length))
