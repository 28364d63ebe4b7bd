"""RM3 pseudo-relevance feedback: relevance-model query expansion plus
weighted BM25 re-scoring.

The relevance model is estimated from the top-ranked first-pass documents:

    P(w|R)  is proportional to  sum over feedback docs d of
            P_mle(w|d) * P_dir(q|d)

where P_mle(w|d) = tf(w,d) / |d| and P_dir(q|d) is the Dirichlet-smoothed
likelihood of the query under d's language model.  The model is truncated to
the strongest terms, renormalized, and interpolated with the original query.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ConvSearchError
from .index import BM25Params, InvertedIndex
from .ranking import RankedList


@dataclass(frozen=True)
class PrfParams:
    """Feedback depth and interpolation settings.

    ``query_weight`` is the interpolation weight on the original query
    (1.0 reproduces it unchanged); ``mu`` is the Dirichlet smoothing mass
    used when scoring the query under each feedback document.
    """

    fb_docs: int = 17
    fb_terms: int = 26
    query_weight: float = 0.5
    mu: float = 2500.0
    exclude_numeric: bool = True

    def __post_init__(self):
        if self.fb_docs < 1:
            raise ValueError(f"fb_docs must be >= 1, got {self.fb_docs}")
        if self.fb_terms < 1:
            raise ValueError(f"fb_terms must be >= 1, got {self.fb_terms}")
        if not 0.0 <= self.query_weight <= 1.0:
            raise ValueError(f"query_weight must be in [0, 1], got {self.query_weight}")
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")


@dataclass
class WeightedQuery:
    """Term distribution carrier; weights are non-negative and sum to one."""

    weights: dict[str, float]

    def __post_init__(self):
        total = 0.0
        for term, w in self.weights.items():
            if w < 0:
                raise ValueError(f"negative weight for term {term!r}")
            total += w
        if total <= 0:
            raise ValueError("weighted query must have positive total mass")
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-12):
            self.weights = {t: w / total for t, w in self.weights.items()}

    @classmethod
    def from_terms(cls, terms) -> "WeightedQuery":
        counts = Counter(terms)
        if not counts:
            raise ValueError("cannot build a weighted query from zero terms")
        return cls({t: float(c) for t, c in counts.items()})

    def items(self):
        return self.weights.items()

    def __len__(self) -> int:
        return len(self.weights)


def log_dirichlet_likelihood(query: WeightedQuery, doc_tf: Counter[str],
                              doc_len: int, index: InvertedIndex,
                              mu: float) -> float:
    """Weighted log P(q|d) under Dirichlet smoothing.

    Query terms absent from the whole collection are skipped; their smoothed
    probability would be zero for every document and carries no signal.
    """
    total = index.stats.total_tokens
    log_p = 0.0
    for term, w in query.items():
        cf = index.collection_frequency(term)
        if cf == 0:
            continue
        p_collection = cf / total
        p = (doc_tf.get(term, 0) + mu * p_collection) / (doc_len + mu)
        log_p += w * math.log(p)
    return log_p


def rm3_expand(query: WeightedQuery, first_pass: RankedList,
               index: InvertedIndex, params: PrfParams = PrfParams()) -> WeightedQuery:
    """Expand a query with the relevance model of its top-ranked documents.

    Uses min(fb_docs, available) feedback documents.  Candidate expansion
    terms already passed the analyzer, so stopwords are gone; pure-digit
    terms are dropped when ``exclude_numeric`` is set.  The truncated model
    keeps the ``fb_terms`` heaviest terms (ties broken alphabetically) and is
    interpolated as query_weight * q + (1 - query_weight) * P(w|R).
    """
    if not first_pass.entries:
        raise ConvSearchError("no feedback documents")
    feedback = first_pass.entries[: params.fb_docs]

    model: dict[str, float] = defaultdict(float)
    for pid, _ in feedback:
        doc_tf = index.doc_terms(pid)
        doc_len = sum(doc_tf.values())
        if doc_len == 0:
            continue
        doc_weight = math.exp(
            log_dirichlet_likelihood(query, doc_tf, doc_len, index, params.mu)
        )
        for term, tf in doc_tf.items():
            if params.exclude_numeric and term.isdigit():
                continue
            model[term] += (tf / doc_len) * doc_weight

    mass = sum(model.values())
    if mass > 0:
        kept = sorted(model.items(), key=lambda kv: (-kv[1], kv[0]))[: params.fb_terms]
        kept_mass = sum(w for _, w in kept)
        truncated = {t: w / kept_mass for t, w in kept}
    else:
        truncated = {}

    lam = params.query_weight
    combined: dict[str, float] = defaultdict(float)
    for term, w in query.items():
        combined[term] += lam * w
    for term, w in truncated.items():
        combined[term] += (1.0 - lam) * w
    # Zero-mass terms are no-ops downstream; dropping them keeps the
    # interpolation endpoints exact (lambda=1 returns the query itself).
    return WeightedQuery({t: w for t, w in combined.items() if w > 0.0})


def weighted_search(query: WeightedQuery, index: InvertedIndex,
                    k: int = 1000, params: BM25Params = BM25Params(),
                    turn_id: str = "", run_tag: str = "bm25+rm3") -> RankedList:
    """BM25 search with each term's contribution multiplied by its weight."""
    return index.search(query.weights, k=k, params=params,
                        turn_id=turn_id, run_tag=run_tag)
