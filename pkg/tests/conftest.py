"""Shared fixtures: synthetic corpora, conversations, and data paths."""

from __future__ import annotations

import os
import random
from pathlib import Path

import pytest

from convsearch import (AnalyzerConfig, Conversation, Corpus, HashedBagEncoder,
                        InvertedIndex, Turn, VectorStore)

VOCAB = (
    "jupiter saturn neptune europa titan moon volcano ice ocean storm ring "
    "gas dust probe lander orbit telescope comet asteroid crater basalt "
    "magnetic field plasma aurora radiation spectrum methane ammonia core"
).split()


def synthetic_passages(count: int, seed: int, vocab=VOCAB,
                       min_len: int = 8, max_len: int = 40) -> list[dict]:
    rng = random.Random(seed)
    out = []
    for i in range(count):
        body = " ".join(rng.choice(vocab) for _ in range(rng.randint(min_len, max_len)))
        out.append({"id": f"D{i:04d}", "body": body, "title": None})
    return out


@pytest.fixture(scope="session")
def small_corpus() -> Corpus:
    passages = synthetic_passages(100, seed=11)
    return Corpus.ingest(passages, AnalyzerConfig())


@pytest.fixture(scope="session")
def small_index(small_corpus) -> InvertedIndex:
    return InvertedIndex.build(small_corpus)


@pytest.fixture(scope="session")
def small_vectors(small_corpus) -> VectorStore:
    return VectorStore.build(small_corpus, HashedBagEncoder())


@pytest.fixture(scope="session")
def big_corpus() -> Corpus:
    """The 1,000-passage fixture used by the search-vs-oracle suites."""
    passages = synthetic_passages(1000, seed=29)
    return Corpus.ingest(passages, AnalyzerConfig())


@pytest.fixture(scope="session")
def big_index(big_corpus) -> InvertedIndex:
    return InvertedIndex.build(big_corpus)


def make_conversations(corpus: Corpus, seed: int = 21,
                       conversations: int = 3, turns: int = 3) -> list[Conversation]:
    """Fresh conversation objects (runs mutate turn rewrites in place)."""
    rng = random.Random(seed)
    ids = list(corpus.passages)
    out = []
    for c in range(conversations):
        turn_list = []
        for t in range(1, turns + 1):
            query = " ".join(rng.choice(VOCAB) for _ in range(4))
            response = corpus.raw_text(rng.choice(ids))
            turn_list.append(Turn(index=t, raw_query=query,
                                  canonical_response=response))
        out.append(Conversation(str(100 + c), turn_list))
    return out


@pytest.fixture
def conversations(small_corpus) -> list[Conversation]:
    return make_conversations(small_corpus)


def trec_data_dir() -> Path:
    return Path(os.environ.get("CONVSEARCH_TREC_DATA", "data/trec"))
