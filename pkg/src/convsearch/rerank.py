"""Second-stage re-ranking.

A pointwise stage rescoring every candidate, optionally followed by a
pairwise stage over the top `cutoff` candidates. Pairwise preferences
are aggregated with the symmetric sum

    s_i = sum over j != i of [ p(i, j) + (1 - p(j, i)) ]

and the re-sorted head is shifted onto a scale that keeps the full
list non-increasing; positions below the cutoff are untouched.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable

from scipy.special import expit

from .errors import ConvSearchError, ProtocolError
from .index import InvertedIndex
from .prf import WeightedQuery, log_dirichlet_likelihood
from .ranking import RankedList, sort_scored

DEFAULT_PAIRWISE_CUTOFF = 50
DEFAULT_QL_MU = 2500.0

TextLookup = Callable[[str], str]


def _overlap_tokens(text: str) -> set[str]:
    out: set[str] = set()
    word: list[str] = []
    for ch in text.lower():
        if ch.isalnum():
            word.append(ch)
        elif word:
            out.add("".join(word))
            word.clear()
    if word:
        out.add("".join(word))
    return out


class PointwiseScorer:
    """Scores (passage-id, raw-text) candidates against a query string."""

    name = "base"

    def score(self, query: str, candidates: list[tuple[str, str]]) -> list[float]:
        raise NotImplementedError


class TermOverlapScorer(PointwiseScorer):
    """Count of distinct alphanumeric tokens shared by query and passage.

    Deliberately simple: a model server running in echo mode computes the
    same quantity, which makes the offline and remote pipeline variants
    comparable byte for byte.
    """

    name = "term-overlap"

    def score(self, query: str, candidates: list[tuple[str, str]]) -> list[float]:
        query_tokens = _overlap_tokens(query)
        return [float(len(query_tokens & _overlap_tokens(text)))
                for _, text in candidates]


class Bm25Rescorer(PointwiseScorer):
    """Re-applies the index's BM25 scoring function to the candidates."""

    name = "bm25-rescorer"

    def __init__(self, index: InvertedIndex):
        self.index = index

    def score(self, query: str, candidates: list[tuple[str, str]]) -> list[float]:
        weights = Counter(self.index.analyze(query))
        return [self.index.bm25_score(weights, pid) for pid, _ in candidates]


class QueryLikelihoodScorer(PointwiseScorer):
    """Dirichlet-smoothed log P(query | passage) over the indexed text."""

    name = "query-likelihood"

    def __init__(self, index: InvertedIndex, mu: float = DEFAULT_QL_MU):
        if mu <= 0:
            raise ConvSearchError(f"Dirichlet mu must be positive, got {mu}")
        self.index = index
        self.mu = mu

    def score(self, query: str, candidates: list[tuple[str, str]]) -> list[float]:
        terms = self.index.analyze(query)
        if not terms:
            return [0.0 for _ in candidates]
        weighted = WeightedQuery.from_terms(terms)
        scores = []
        for pid, _ in candidates:
            doc_tf = self.index.doc_terms(pid)
            doc_len = self.index.doc_len[pid]
            scores.append(log_dirichlet_likelihood(
                weighted, doc_tf, doc_len, self.index, self.mu))
        return scores


class RemoteMonoScorer(PointwiseScorer):
    name = "remote-mono"

    def __init__(self, client):
        self.client = client

    def score(self, query: str, candidates: list[tuple[str, str]]) -> list[float]:
        return self.client.score(query, candidates)


@dataclass(frozen=True)
class PairCandidate:
    """One ordered pair for preference scoring."""

    id_a: str
    text_a: str
    score_a: float
    id_b: str
    text_b: str
    score_b: float


class PairwiseScorer:
    """Estimates p(a beats b) for ordered candidate pairs."""

    name = "base"

    def pair_probs(self, query: str, pairs: list[PairCandidate]) -> list[float]:
        raise NotImplementedError


class MarginStubScorer(PairwiseScorer):
    """p(a beats b) = sigmoid(score_a - score_b) from the pointwise stage."""

    name = "margin-stub"

    def pair_probs(self, query: str, pairs: list[PairCandidate]) -> list[float]:
        return [float(expit(p.score_a - p.score_b)) for p in pairs]


class RemoteDuoScorer(PairwiseScorer):
    name = "remote-duo"

    def __init__(self, client):
        self.client = client

    def pair_probs(self, query: str, pairs: list[PairCandidate]) -> list[float]:
        wire = [(p.id_a, p.text_a, p.id_b, p.text_b) for p in pairs]
        return self.client.pairscore(query, wire)


def pointwise_rerank(query: str, candidates: RankedList,
                     scorer: PointwiseScorer,
                     text_of: TextLookup) -> RankedList:
    """Reorder the full candidate set by the scorer, ties broken by id."""
    if not candidates.entries:
        raise ConvSearchError("pointwise_rerank needs a non-empty candidate list")
    pairs = [(pid, text_of(pid)) for pid, _ in candidates.entries]
    scores = scorer.score(query, pairs)
    if len(scores) != len(pairs):
        raise ProtocolError(
            f"scorer {scorer.name} returned {len(scores)} scores "
            f"for {len(pairs)} candidates"
        )
    entries = sort_scored({pid: float(s) for (pid, _), s in zip(pairs, scores)})
    return RankedList(candidates.turn_id, entries, candidates.run_tag)


def sym_sum(ids: list[str], probs: dict[tuple[str, str], float]) -> dict[str, float]:
    """Aggregate ordered-pair preferences into one score per document."""
    totals = {pid: 0.0 for pid in ids}
    for i in ids:
        for j in ids:
            if i == j:
                continue
            totals[i] += probs[(i, j)] + (1.0 - probs[(j, i)])
    return totals


def pairwise_rerank(query: str, ranked: RankedList,
                    scorer: PairwiseScorer,
                    text_of: TextLookup,
                    cutoff: int = DEFAULT_PAIRWISE_CUTOFF) -> RankedList:
    """Re-rank the top `cutoff` entries by aggregated pair preferences.

    Entries beyond the cutoff keep their positions, scores included. The
    re-sorted head is shifted so its lowest score equals the first tail
    score, preserving a non-increasing list.
    """
    if cutoff < 2:
        raise ConvSearchError(f"pairwise cutoff must be >= 2, got {cutoff}")
    head = ranked.entries[:cutoff]
    tail = ranked.entries[cutoff:]
    if len(head) < 2:
        return ranked

    scores = dict(head)
    texts = {pid: text_of(pid) for pid, _ in head}
    ids = [pid for pid, _ in head]
    pairs = [PairCandidate(i, texts[i], scores[i], j, texts[j], scores[j])
             for i in ids for j in ids if i != j]
    probs = scorer.pair_probs(query, pairs)
    if len(probs) != len(pairs):
        raise ProtocolError(
            f"pairwise scorer {scorer.name} returned {len(probs)} "
            f"probabilities for {len(pairs)} pairs"
        )
    by_pair = {(p.id_a, p.id_b): float(prob) for p, prob in zip(pairs, probs)}
    aggregated = sym_sum(ids, by_pair)

    new_head = sort_scored(aggregated)
    if tail:
        # base + (s - low) is exact at the seam and, unlike adding a
        # precomputed shift, can never round below the first tail score.
        base = tail[0][1]
        low = new_head[-1][1]
        new_head = [(pid, base + (score - low)) for pid, score in new_head]
    return RankedList(ranked.turn_id, new_head + tail, ranked.run_tag)
