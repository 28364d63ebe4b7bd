"""TREC-style evaluation: run/qrels I/O, ranking metrics, significance.

Runfiles are the six-column format `turn-id Q0 passage-id rank score
tag` with scores printed to six decimals; qrels are `turn-id 0
passage-id grade`. Metrics follow the graded/binary conventions of the
standard TREC tooling: linear gain for NDCG, binarization at a grade
threshold for recall, MAP and MRR, and a shared rank cutoff.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from scipy.special import betainc

from .errors import ConvSearchError, FormatError
from .ranking import RankedList, sort_scored

log = logging.getLogger(__name__)

METRICS = ("recall", "map", "mrr", "ndcg", "ndcg@3")
DEFAULT_CUTOFF = 500
DEFAULT_THRESHOLD = 2
NDCG_SMALL_K = 3


@dataclass
class Qrels:
    """Graded judgments: turn-id -> passage-id -> grade (>= 0)."""

    grades: dict[str, dict[str, int]] = field(default_factory=dict)

    def add(self, turn_id: str, passage_id: str, grade: int) -> None:
        if grade < 0:
            raise FormatError(f"negative grade {grade} for {turn_id}/{passage_id}")
        per_turn = self.grades.setdefault(turn_id, {})
        if passage_id in per_turn:
            raise FormatError(f"duplicate judgment for {turn_id}/{passage_id}")
        per_turn[passage_id] = grade

    def turn_ids(self) -> list[str]:
        return list(self.grades)

    def grade(self, turn_id: str, passage_id: str) -> int:
        return self.grades.get(turn_id, {}).get(passage_id, 0)

    def relevant_count(self, turn_id: str, threshold: int) -> int:
        return sum(1 for g in self.grades.get(turn_id, {}).values()
                   if g >= threshold)

    def __len__(self) -> int:
        return len(self.grades)


def _lines(source) -> Iterable[tuple[int, str]]:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
        raw = text.splitlines()
    else:
        raw = [line.rstrip("\n") for line in source]
    for number, line in enumerate(raw, start=1):
        if line.strip():
            yield number, line


def parse_runfile(source) -> dict[str, RankedList]:
    """Parse a TREC runfile into per-turn ranked lists.

    Entries are re-sorted by score descending with ties broken by
    passage id; the rank column is only checked for monotonicity.
    """
    per_turn: dict[str, dict[str, float]] = {}
    tags: dict[str, str] = {}
    last_rank: dict[str, int] = {}
    rank_warned = False
    for number, line in _lines(source):
        parts = line.split()
        if len(parts) != 6:
            raise FormatError(
                f"runfile line {number}: expected 6 columns, got {len(parts)}"
            )
        turn_id, _, passage_id, rank_text, score_text, tag = parts
        try:
            rank = int(rank_text)
            score = float(score_text)
        except ValueError as exc:
            raise FormatError(f"runfile line {number}: {exc}") from exc
        entries = per_turn.setdefault(turn_id, {})
        if passage_id in entries:
            raise FormatError(
                f"runfile line {number}: duplicate passage {passage_id} "
                f"for turn {turn_id}"
            )
        if not rank_warned and rank < last_rank.get(turn_id, 0):
            log.warning("runfile line %d: rank column not monotone for turn %s",
                        number, turn_id)
            rank_warned = True
        last_rank[turn_id] = rank
        entries[passage_id] = score
        tags.setdefault(turn_id, tag)
    return {
        turn_id: RankedList(turn_id, sort_scored(scores), tags[turn_id])
        for turn_id, scores in per_turn.items()
    }


def write_runfile(lists: Iterable[RankedList], destination) -> None:
    """Write ranked lists in list order, scores to six decimals."""
    out = []
    for ranked in lists:
        for rank, (passage_id, score) in enumerate(ranked.entries, start=1):
            out.append(f"{ranked.turn_id} Q0 {passage_id} {rank} "
                       f"{score:.6f} {ranked.run_tag}\n")
    text = "".join(out)
    if isinstance(destination, (str, Path)):
        Path(destination).write_text(text, encoding="utf-8")
    else:
        destination.write(text)


def parse_qrels(source) -> Qrels:
    qrels = Qrels()
    for number, line in _lines(source):
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(
                f"qrels line {number}: expected 4 columns, got {len(parts)}"
            )
        turn_id, _, passage_id, grade_text = parts
        try:
            grade = int(grade_text)
        except ValueError as exc:
            raise FormatError(f"qrels line {number}: {exc}") from exc
        try:
            qrels.add(turn_id, passage_id, grade)
        except FormatError as exc:
            raise FormatError(f"qrels line {number}: {exc}") from exc
    if not qrels.grades:
        raise FormatError("qrels are empty")
    return qrels


def write_qrels(qrels: Qrels, destination) -> None:
    out = []
    for turn_id, per_turn in qrels.grades.items():
        for passage_id, grade in per_turn.items():
            out.append(f"{turn_id} 0 {passage_id} {grade}\n")
    text = "".join(out)
    if isinstance(destination, (str, Path)):
        Path(destination).write_text(text, encoding="utf-8")
    else:
        destination.write(text)


@dataclass(frozen=True)
class MetricReport:
    per_turn: dict[str, dict[str, float]]
    means: dict[str, float]
    cutoff: int
    threshold: int

    def mean(self, metric: str) -> float:
        return self.means[metric]

    def turn_values(self, metric: str) -> dict[str, float]:
        return {turn: values[metric] for turn, values in self.per_turn.items()}

    def to_dict(self) -> dict:
        return {
            "cutoff": self.cutoff,
            "threshold": self.threshold,
            "means": dict(self.means),
            "per_turn": {t: dict(v) for t, v in self.per_turn.items()},
        }


def _dcg(grades: list[int], k: int) -> float:
    return sum(grade / math.log2(position + 1)
               for position, grade in enumerate(grades[:k], start=1))


def _turn_metrics(ranking: list[str], judged: dict[str, int],
                  cutoff: int, threshold: int) -> dict[str, float]:
    top = ranking[:cutoff]
    relevant_total = sum(1 for g in judged.values() if g >= threshold)

    hits = 0
    precision_sum = 0.0
    first_relevant_rank = 0
    for rank, passage_id in enumerate(top, start=1):
        if judged.get(passage_id, 0) >= threshold:
            hits += 1
            precision_sum += hits / rank
            if first_relevant_rank == 0:
                first_relevant_rank = rank

    recall = hits / relevant_total if relevant_total else 0.0
    average_precision = precision_sum / relevant_total if relevant_total else 0.0
    reciprocal_rank = 1.0 / first_relevant_rank if first_relevant_rank else 0.0

    gains = [judged.get(passage_id, 0) for passage_id in top]
    ideal = sorted(judged.values(), reverse=True)
    values = {"recall": recall, "map": average_precision, "mrr": reciprocal_rank}
    for name, k in (("ndcg", cutoff), ("ndcg@3", NDCG_SMALL_K)):
        ideal_dcg = _dcg(ideal, k)
        values[name] = _dcg(gains, k) / ideal_dcg if ideal_dcg > 0 else 0.0
    return values


def compute_metrics(run: Mapping[str, RankedList], qrels: Qrels,
                    cutoff: int = DEFAULT_CUTOFF,
                    threshold: int = DEFAULT_THRESHOLD) -> MetricReport:
    """Score a run against qrels; every judged turn counts toward the mean.

    Turns missing from the run score zero everywhere. Entries are
    re-sorted by (score desc, passage id) before scoring so tie handling
    never depends on how the run was produced.
    """
    if not qrels.grades:
        raise ConvSearchError("cannot evaluate against empty qrels")
    if cutoff < 1:
        raise ConvSearchError(f"cutoff must be >= 1, got {cutoff}")
    per_turn: dict[str, dict[str, float]] = {}
    for turn_id, judged in qrels.grades.items():
        ranked = run.get(turn_id)
        if ranked is None or not ranked.entries:
            per_turn[turn_id] = {name: 0.0 for name in METRICS}
            continue
        ordered = [pid for pid, _ in sort_scored(ranked.scores())]
        per_turn[turn_id] = _turn_metrics(ordered, judged, cutoff, threshold)
    count = len(per_turn)
    means = {name: sum(v[name] for v in per_turn.values()) / count
             for name in METRICS}
    return MetricReport(per_turn, means, cutoff, threshold)


def paired_t_test(per_turn_a: list[float],
                  per_turn_b: list[float]) -> tuple[float, float]:
    """Two-sided paired t-test; p from the t-distribution with n-1 dof.

    Conventions: identical inputs give (0, 1); zero-variance nonzero
    differences give (+/-inf, 0) with a logged warning.
    """
    if len(per_turn_a) != len(per_turn_b):
        raise ConvSearchError(
            f"paired test needs aligned lists, got {len(per_turn_a)} "
            f"vs {len(per_turn_b)} values"
        )
    n = len(per_turn_a)
    if n < 2:
        raise ConvSearchError("paired test needs at least 2 paired values")
    diffs = [a - b for a, b in zip(per_turn_a, per_turn_b)]
    mean = sum(diffs) / n
    variance = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if variance == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        log.warning("paired t-test: zero-variance nonzero differences; "
                    "reporting infinite t with p=0")
        return math.copysign(math.inf, mean), 0.0
    t = mean / math.sqrt(variance / n)
    dof = n - 1
    p = float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))
    return t, p


def compare_reports(report_a: MetricReport, report_b: MetricReport,
                    alpha: float = 0.05) -> dict:
    """Metric-by-metric comparison of two reports over the same turns."""
    turns_a = set(report_a.per_turn)
    turns_b = set(report_b.per_turn)
    if turns_a != turns_b:
        missing = sorted(turns_a ^ turns_b)
        raise ConvSearchError(f"reports cover different turns: {missing}")
    order = sorted(turns_a)
    out: dict = {"alpha": alpha, "metrics": {}, "differing_turns": {}}
    for name in METRICS:
        a_values = [report_a.per_turn[t][name] for t in order]
        b_values = [report_b.per_turn[t][name] for t in order]
        t_stat, p_value = paired_t_test(a_values, b_values)
        mean_a = report_a.means[name]
        mean_b = report_b.means[name]
        diff = mean_a - mean_b
        out["metrics"][name] = {
            "mean_a": mean_a,
            "mean_b": mean_b,
            "diff": diff,
            "rel_diff": diff / mean_b if mean_b else 0.0,
            "t": t_stat,
            "p": p_value,
            "significant": p_value < alpha,
        }
        out["differing_turns"][name] = [
            t for t, a, b in zip(order, a_values, b_values) if a != b
        ]
    return out
