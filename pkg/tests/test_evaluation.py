"""Runfile/qrels I/O, the metric suite, and paired significance testing."""

from __future__ import annotations

import io
import math
import random

import pytest
from scipy import stats as scipy_stats

from convsearch import (FormatError, Qrels, RankedList, compare_reports,
                        compute_metrics, paired_t_test, parse_qrels,
                        parse_runfile, write_qrels, write_runfile)


def runfile_text(lines):
    return "".join(line + "\n" for line in lines)


# --- runfile I/O ---------------------------------------------------------

def test_parse_single_line():
    runs = parse_runfile(io.StringIO("1_1 Q0 D7 1 3.5 tag\n"))
    assert list(runs) == ["1_1"]
    assert runs["1_1"].entries == [("D7", 3.5)]
    assert runs["1_1"].run_tag == "tag"


def test_parse_duplicate_rejected():
    text = runfile_text(["1_1 Q0 D7 1 3.5 tag", "1_1 Q0 D7 2 3.0 tag"])
    with pytest.raises(FormatError) as err:
        parse_runfile(io.StringIO(text))
    assert "line 2" in str(err.value)


def test_parse_wrong_column_count():
    with pytest.raises(FormatError) as err:
        parse_runfile(io.StringIO("1_1 Q0 D7 1 3.5\n"))
    assert "line 1" in str(err.value)


def test_parse_bad_score():
    with pytest.raises(FormatError):
        parse_runfile(io.StringIO("1_1 Q0 D7 1 notanumber tag\n"))


def test_parse_reorders_by_score():
    text = runfile_text(["1_1 Q0 LOW 1 1.0 t", "1_1 Q0 HIGH 2 9.0 t"])
    runs = parse_runfile(io.StringIO(text))
    assert [p for p, _ in runs["1_1"].entries] == ["HIGH", "LOW"]


def test_runfile_round_trip(tmp_path):
    lists = {
        "2_1": RankedList("2_1", [("DA", 2.25), ("DB", 1.5)], "mytag"),
        "1_1": RankedList("1_1", [("DC", 0.125)], "mytag"),
    }
    path = tmp_path / "run.txt"
    with path.open("w") as handle:
        write_runfile(list(lists.values()), handle)
    parsed = parse_runfile(path)
    assert set(parsed) == set(lists)
    for tid, rl in lists.items():
        assert parsed[tid].entries == rl.entries
        assert parsed[tid].run_tag == "mytag"


def test_runfile_format_details(tmp_path):
    out = io.StringIO()
    write_runfile([RankedList("1_1", [("D1", 1.23456789), ("D2", 1.0)], "t")],
                  out)
    lines = out.getvalue().splitlines()
    assert lines[0] == "1_1 Q0 D1 1 1.234568 t"
    assert lines[1] == "1_1 Q0 D2 2 1.000000 t"


def test_qrels_round_trip(tmp_path):
    qrels = Qrels()
    qrels.add("1_1", "D1", 3)
    qrels.add("1_1", "D2", 0)
    qrels.add("2_1", "D1", 1)
    path = tmp_path / "qrels.txt"
    with path.open("w") as handle:
        write_qrels(qrels, handle)
    parsed = parse_qrels(path)
    assert parsed.grades == qrels.grades


def test_qrels_validation():
    with pytest.raises(FormatError):
        parse_qrels(io.StringIO("1_1 0 D1 -2\n"))
    with pytest.raises(FormatError):
        parse_qrels(io.StringIO("1_1 D1 2\n"))
    qrels = Qrels()
    qrels.add("t", "d", 1)
    with pytest.raises(FormatError):
        qrels.add("t", "d", 2)


# --- metrics -------------------------------------------------------------

def report_for(entries, grades, cutoff=500, threshold=2):
    run = {"1_1": RankedList("1_1", entries, "t")}
    qrels = Qrels()
    for pid, grade in grades.items():
        qrels.add("1_1", pid, grade)
    return compute_metrics(run, qrels, cutoff=cutoff, threshold=threshold)


def test_ndcg3_hand_example():
    # Ranked grades (4, 0, 2); one more grade-2 doc exists in the pool.
    entries = [("A", 4.0), ("B", 3.0), ("C", 2.0), ("D", 1.0)]
    grades = {"A": 4, "B": 0, "C": 2, "D": 2}
    report = report_for(entries, grades)
    dcg = 4 / 1 + 0 + 2 / 2
    idcg = 4 + 2 / math.log2(3) + 2 / 2
    assert dcg == 5.0
    assert idcg == pytest.approx(6.26186, abs=1e-5)
    assert report.mean("ndcg@3") == pytest.approx(0.79848, abs=1e-5)


def test_rr_first_relevant_at_rank_two():
    entries = [("A", 2.0), ("B", 1.0)]
    report = report_for(entries, {"A": 1, "B": 2})
    assert report.mean("mrr") == 0.5


def test_recall_counts_full_qrels_denominator():
    entries = [("A", 2.0)]
    report = report_for(entries, {"A": 3, "B": 2, "C": 2, "D": 0})
    assert report.mean("recall") == pytest.approx(1 / 3)


def test_map_hand_example():
    # Relevant docs A (rank 1) and C (rank 3); one unretrieved relevant E.
    entries = [("A", 4.0), ("B", 3.0), ("C", 2.0), ("D", 1.0)]
    report = report_for(entries, {"A": 2, "C": 3, "E": 2})
    expected = (1 / 1 + 2 / 3) / 3
    assert report.mean("map") == pytest.approx(expected, abs=1e-12)


def test_perfect_ranking_ndcg_is_one():
    entries = [("A", 3.0), ("B", 2.0), ("C", 1.0)]
    report = report_for(entries, {"A": 4, "B": 2, "C": 1})
    assert report.mean("ndcg") == pytest.approx(1.0)
    assert report.mean("ndcg@3") == pytest.approx(1.0)


def test_no_relevant_turn_scores_zero():
    entries = [("A", 1.0)]
    report = report_for(entries, {"A": 1, "B": 0})
    for metric in ("recall", "map", "mrr"):
        assert report.mean(metric) == 0.0


def test_turn_missing_from_run_scores_zero():
    run = {"1_1": RankedList("1_1", [("A", 1.0)], "t")}
    qrels = Qrels()
    qrels.add("1_1", "A", 2)
    qrels.add("9_9", "Z", 3)
    report = compute_metrics(run, qrels, cutoff=500, threshold=2)
    assert report.per_turn["9_9"]["ndcg@3"] == 0.0
    assert report.mean("mrr") == pytest.approx(0.5 * (1.0 + 0.0))


def test_unjudged_run_turns_ignored():
    run = {
        "1_1": RankedList("1_1", [("A", 1.0)], "t"),
        "8_8": RankedList("8_8", [("A", 1.0)], "t"),
    }
    qrels = Qrels()
    qrels.add("1_1", "A", 2)
    report = compute_metrics(run, qrels, cutoff=500, threshold=2)
    assert set(report.per_turn) == {"1_1"}


def test_cutoff_limits_scoring_window():
    entries = [("A", 3.0), ("B", 2.0), ("C", 1.0)]
    report = report_for(entries, {"C": 2}, cutoff=2)
    assert report.mean("recall") == 0.0
    assert report.mean("mrr") == 0.0


def test_score_scale_invariance():
    entries = [("A", 3.0), ("B", 2.0), ("C", 1.0)]
    grades = {"A": 0, "B": 3, "C": 1}
    scaled = [(p, s * 1234.5) for p, s in entries]
    a = report_for(entries, grades)
    b = report_for(scaled, grades)
    for metric in a.means:
        assert a.means[metric] == pytest.approx(b.means[metric], abs=1e-12)


def test_empty_qrels_rejected():
    from convsearch import ConvSearchError
    run = {"1_1": RankedList("1_1", [("A", 1.0)], "t")}
    with pytest.raises(ConvSearchError):
        compute_metrics(run, Qrels(), cutoff=500, threshold=2)


def brute_force_metrics(entries, grades, cutoff, threshold):
    """Straight-line metric definitions, no shared code with the package."""
    ordered = sorted(entries, key=lambda kv: (-kv[1], kv[0]))[:cutoff]
    ranked_ids = [p for p, _ in ordered]
    relevant = {p for p, g in grades.items() if g >= threshold}

    recall = (len([p for p in ranked_ids if p in relevant]) / len(relevant)
              if relevant else 0.0)

    hits = 0
    ap = 0.0
    for i, pid in enumerate(ranked_ids, start=1):
        if pid in relevant:
            hits += 1
            ap += hits / i
    ap = ap / len(relevant) if relevant else 0.0

    rr = 0.0
    for i, pid in enumerate(ranked_ids, start=1):
        if pid in relevant:
            rr = 1.0 / i
            break

    def dcg(values, k):
        return sum(v / math.log2(i + 1)
                   for i, v in enumerate(values[:k], start=1))

    gains = [grades.get(p, 0) for p in ranked_ids]
    ideal = sorted(grades.values(), reverse=True)
    out = {}
    for name, k in (("ndcg", cutoff), ("ndcg@3", 3)):
        ideal_dcg = dcg(ideal, k)
        out[name] = dcg(gains, k) / ideal_dcg if ideal_dcg > 0 else 0.0
    out.update(recall=recall, map=ap, mrr=rr)
    return out


def test_metrics_match_brute_force_oracle_100_seeds():
    for seed in range(100):
        rng = random.Random(seed)
        n_docs = rng.randint(1, 20)
        doc_ids = [f"D{i:02d}" for i in range(n_docs)]
        run = {}
        qrels = Qrels()
        per_turn_inputs = {}
        for turn in range(rng.randint(1, 5)):
            tid = f"{seed}_{turn + 1}"
            judged = rng.sample(doc_ids, rng.randint(1, n_docs))
            grades = {p: rng.choice([0, 0, 1, 2, 3, 4]) for p in judged}
            for pid, grade in grades.items():
                qrels.add(tid, pid, grade)
            retrieved = rng.sample(doc_ids, rng.randint(1, n_docs))
            scores = sorted((rng.random() for _ in retrieved), reverse=True)
            entries = list(zip(retrieved, scores))
            run[tid] = RankedList(tid, entries, "t")
            per_turn_inputs[tid] = (entries, grades)
        cutoff = rng.choice([3, 10, 500])
        report = compute_metrics(run, qrels, cutoff=cutoff, threshold=2)
        for tid, (entries, grades) in per_turn_inputs.items():
            expected = brute_force_metrics(entries, grades, cutoff, 2)
            for metric, value in expected.items():
                assert report.per_turn[tid][metric] == \
                    pytest.approx(value, abs=1e-9), (seed, tid, metric)


# --- paired t-test -------------------------------------------------------

def test_t_identical_vectors():
    t, p = paired_t_test([0.2, 0.4, 0.6], [0.2, 0.4, 0.6])
    assert (t, p) == (0.0, 1.0)


def test_t_constant_offset_degenerate(caplog):
    t, p = paired_t_test([1.0, 2.0, 3.0], [0.5, 1.5, 2.5])
    assert p == 0.0
    assert math.isinf(t) and t > 0


def test_t_matches_scipy_on_fixed_vectors():
    rng = random.Random(42)
    for _ in range(20):
        n = rng.randint(5, 30)
        a = [rng.gauss(0.5, 0.2) for _ in range(n)]
        b = [x + rng.gauss(0.0, 0.1) for x in a]
        t, p = paired_t_test(a, b)
        expected = scipy_stats.ttest_rel(a, b)
        assert t == pytest.approx(expected.statistic, abs=1e-6)
        assert p == pytest.approx(expected.pvalue, abs=1e-6)


def test_t_validation():
    from convsearch import ConvSearchError
    with pytest.raises(ConvSearchError):
        paired_t_test([1.0], [1.0])
    with pytest.raises(ConvSearchError):
        paired_t_test([1.0, 2.0], [1.0])


# --- report comparison ---------------------------------------------------

def test_compare_reports_table():
    qrels = Qrels()
    for pid, grade in (("A", 3), ("B", 2), ("C", 0)):
        for turn in ("1_1", "1_2", "2_1"):
            qrels.add(turn, pid, grade)
    good = {t: RankedList(t, [("A", 3.0), ("B", 2.0), ("C", 1.0)], "g")
            for t in ("1_1", "1_2", "2_1")}
    bad = {t: RankedList(t, [("C", 3.0), ("B", 2.0), ("A", 1.0)], "b")
           for t in ("1_1", "1_2", "2_1")}
    ra = compute_metrics(good, qrels, cutoff=500, threshold=2)
    rb = compute_metrics(bad, qrels, cutoff=500, threshold=2)
    cmp = compare_reports(ra, rb)
    row = cmp["metrics"]["ndcg@3"]
    assert row["mean_a"] > row["mean_b"]
    assert row["diff"] == pytest.approx(row["mean_a"] - row["mean_b"])
    assert set(cmp["metrics"]) == {"recall", "map", "mrr", "ndcg", "ndcg@3"}


def test_compare_reports_requires_same_turns():
    qrels = Qrels()
    qrels.add("1_1", "A", 2)
    qrels.add("1_2", "A", 2)
    run_a = {"1_1": RankedList("1_1", [("A", 1.0)], "t"),
             "1_2": RankedList("1_2", [("A", 1.0)], "t")}
    run_b = {"1_1": RankedList("1_1", [("A", 1.0)], "t")}
    qrels_b = Qrels()
    qrels_b.add("1_1", "A", 2)
    ra = compute_metrics(run_a, qrels, cutoff=500, threshold=2)
    rb = compute_metrics(run_b, qrels_b, cutoff=500, threshold=2)
    from convsearch import ConvSearchError
    with pytest.raises(ConvSearchError):
        compare_reports(ra, rb)
