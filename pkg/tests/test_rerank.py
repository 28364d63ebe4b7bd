"""Pointwise and pairwise re-ranking, including the sym-sum aggregation."""

from __future__ import annotations

import random

import pytest
from scipy.special import expit

from convsearch import (ConvSearchError, RankedList, MarginStubScorer,
                        PairCandidate, QueryLikelihoodScorer, RankedList,
                        TermOverlapScorer, pairwise_rerank, pointwise_rerank)
from convsearch.rerank import Bm25Rescorer, sym_sum


def ranked(entries, turn_id="t1", tag="test"):
    return RankedList(turn_id, entries, tag)


TEXTS = {
    "D1": "jupiter largest planet gas giant",
    "D2": "saturn rings ice particles",
    "D3": "jupiter storm red spot",
    "D4": "unrelated basalt crater text",
}


def text_of(pid):
    return TEXTS[pid]


# --- pointwise -----------------------------------------------------------

def test_single_candidate_unchanged():
    lst = ranked([("D1", 3.0)])
    out = pointwise_rerank("jupiter", lst, TermOverlapScorer(), text_of)
    assert out.entries == [("D1", 1.0)]


def test_term_overlap_counts_distinct_shared_tokens():
    lst = ranked([("D1", 9.0), ("D2", 8.0), ("D3", 7.0), ("D4", 6.0)])
    out = pointwise_rerank("jupiter storm jupiter", lst, TermOverlapScorer(),
                           text_of)
    scores = dict(out.entries)
    assert scores["D3"] == 2.0  # jupiter + storm
    assert scores["D1"] == 1.0
    assert scores["D2"] == 0.0
    assert out.entries[0][0] == "D3"


def test_pointwise_is_permutation():
    lst = ranked([("D1", 9.0), ("D2", 8.0), ("D3", 7.0)])
    out = pointwise_rerank("saturn ice", lst, TermOverlapScorer(), text_of)
    assert sorted(p for p, _ in out.entries) == ["D1", "D2", "D3"]
    assert len(out.entries) == len(lst.entries)


def test_pointwise_tie_broken_by_id():
    lst = ranked([("D4", 2.0), ("D1", 1.0)])
    out = pointwise_rerank("nothing matches here", lst, TermOverlapScorer(),
                           text_of)
    assert [p for p, _ in out.entries] == ["D1", "D4"]


def test_pointwise_empty_rejected():
    with pytest.raises(ConvSearchError):
        pointwise_rerank("q", ranked([]), TermOverlapScorer(), text_of)


def test_bm25_rescorer_matches_first_pass_order(big_index):
    query = "moon ice storm"
    first = big_index.search(big_index.analyze(query), k=30)
    out = pointwise_rerank(query, first, Bm25Rescorer(big_index),
                           lambda pid: big_index.corpus.raw_text(pid))
    assert [p for p, _ in out.entries] == [p for p, _ in first.entries]
    for (pid, score), (_, fscore) in zip(out.entries, first.entries):
        assert score == pytest.approx(fscore, abs=1e-9)


def test_query_likelihood_matches_brute_force(big_index):
    import math

    query = "jupiter orbit dust"
    first = big_index.search(big_index.analyze(query), k=20)
    scorer = QueryLikelihoodScorer(big_index, mu=2500.0)
    out = pointwise_rerank(query, first, scorer,
                           lambda pid: big_index.corpus.raw_text(pid))

    q_terms = big_index.analyze(query)
    total = big_index.stats.total_tokens
    expected = {}
    for pid, _ in first.entries:
        tf = big_index.doc_terms(pid)
        dl = sum(tf.values())
        log_p = 0.0
        for term in set(q_terms):
            w = q_terms.count(term) / len(q_terms)
            cf = sum(c for _, c in big_index.postings.get(term, ()))
            if cf == 0:
                continue
            log_p += w * math.log((tf.get(term, 0) + 2500.0 * cf / total)
                                  / (dl + 2500.0))
        expected[pid] = log_p
    got = dict(out.entries)
    for pid, val in expected.items():
        assert got[pid] == pytest.approx(val, abs=1e-9)


# --- pairwise ------------------------------------------------------------

class TableScorer:
    """Pairwise scorer driven by an explicit probability table."""

    name = "table"

    def __init__(self, probs):
        self.probs = probs

    def pair_probs(self, query, pairs):
        return [self.probs[(p.id_a, p.id_b)] for p in pairs]


def test_sym_sum_two_doc_hand_example():
    scores = sym_sum(["A", "B"], {("A", "B"): 0.9, ("B", "A"): 0.1})
    assert scores["A"] == pytest.approx(1.8)
    assert scores["B"] == pytest.approx(0.2)


def test_pairwise_two_doc_reorder():
    lst = ranked([("B", 5.0), ("A", 4.0)])
    scorer = TableScorer({("A", "B"): 0.9, ("B", "A"): 0.1})
    out = pairwise_rerank("q", lst, scorer, lambda pid: pid, cutoff=2)
    assert [p for p, _ in out.entries] == ["A", "B"]


def test_margin_stub_preserves_decreasing_order():
    entries = [(f"D{i}", 10.0 - i) for i in range(8)]
    out = pairwise_rerank("q", ranked(entries), MarginStubScorer(),
                          lambda pid: pid, cutoff=5)
    assert [p for p, _ in out.entries] == [p for p, _ in entries]


def test_pairwise_tail_byte_identical():
    rng = random.Random(3)
    entries = [(f"D{i:02d}", 100.0 - i) for i in range(20)]
    probs = {}
    head = [p for p, _ in entries[:6]]
    for a in head:
        for b in head:
            if a != b:
                probs[(a, b)] = rng.random()
    lst = ranked(entries)
    out = pairwise_rerank("q", lst, TableScorer(probs), lambda pid: pid,
                          cutoff=6)
    assert out.entries[6:] == entries[6:]
    assert sorted(p for p, _ in out.entries) == sorted(p for p, _ in entries)
    scores = [s for _, s in out.entries]
    assert scores == sorted(scores, reverse=True)
    # The seam is exact: worst surviving head score equals the best tail score.
    assert out.entries[5][1] == entries[6][1]


def test_pairwise_matches_brute_force_oracle():
    rng = random.Random(11)
    for _ in range(10):
        n = 10
        entries = [(f"D{i:02d}", 50.0 - i) for i in range(n)]
        probs = {(a, b): rng.random()
                 for a, _ in entries for b, _ in entries if a != b}
        out = pairwise_rerank("q", ranked(entries), TableScorer(probs),
                              lambda pid: pid, cutoff=n)
        expected = {}
        ids = [p for p, _ in entries]
        for i in ids:
            expected[i] = sum(probs[(i, j)] + (1 - probs[(j, i)])
                              for j in ids if j != i)
        order = sorted(ids, key=lambda d: (-expected[d], d))
        assert [p for p, _ in out.entries] == order


def test_antisymmetric_scorer_reduces_to_double_sum():
    # margin-stub satisfies p(i,j) = 1 - p(j,i), so sym-sum = 2 * sum p(i,j).
    entries = [("A", 3.0), ("B", 2.0), ("C", 1.0)]
    by_id = dict(entries)
    candidates = {(a, b): expit(by_id[a] - by_id[b])
                  for a in by_id for b in by_id if a != b}
    scores = sym_sum(list(by_id), candidates)
    for doc in by_id:
        direct = 2 * sum(candidates[(doc, other)]
                         for other in by_id if other != doc)
        assert scores[doc] == pytest.approx(direct, abs=1e-12)


def test_cutoff_validation_and_small_heads():
    lst = ranked([("A", 2.0), ("B", 1.0)])
    with pytest.raises(ConvSearchError):
        pairwise_rerank("q", lst, MarginStubScorer(), lambda pid: pid,
                        cutoff=1)
    single = ranked([("A", 2.0)])
    out = pairwise_rerank("q", single, MarginStubScorer(), lambda pid: pid,
                          cutoff=10)
    assert out.entries == single.entries


def test_margin_stub_probability_range():
    cand = PairCandidate("A", "ta", 100.0, "B", "tb", -100.0)
    probs = MarginStubScorer().pair_probs("q", [cand])
    assert 0.0 <= probs[0] <= 1.0
    assert probs[0] == pytest.approx(1.0, abs=1e-9)


def test_wrong_score_count_is_protocol_error():
    from convsearch import ProtocolError

    class BadScorer:
        name = "bad"

        def score(self, query, items):
            return [1.0]  # always one score, whatever was asked

    with pytest.raises(ProtocolError):
        pointwise_rerank("q", ranked([("D1", 2.0), ("D2", 1.0)]),
                         BadScorer(), text_of)
