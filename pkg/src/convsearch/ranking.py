"""Ranked result lists, the currency passed between all retrieval stages."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping


def sort_scored(scores: Mapping[str, float]) -> list[tuple[str, float]]:
    """Order by score descending, ties broken by ascending passage id."""
    return sorted(((pid, float(s)) for pid, s in scores.items()),
                  key=lambda kv: (-kv[1], kv[0]))


@dataclass
class RankedList:
    """Ordered (passage-id, score) pairs for one turn.

    Scores must be non-increasing and ids unique; violated invariants raise
    at construction so malformed lists never propagate.
    """

    turn_id: str
    entries: list[tuple[str, float]]
    run_tag: str = "run"

    def __post_init__(self):
        self.entries = [(pid, float(score)) for pid, score in self.entries]
        seen: set[str] = set()
        prev = None
        for pid, score in self.entries:
            if pid in seen:
                raise ValueError(f"duplicate passage id in ranked list: {pid!r}")
            seen.add(pid)
            if prev is not None and score > prev:
                raise ValueError("ranked list scores must be non-increasing")
            prev = score

    @classmethod
    def from_scores(cls, turn_id: str, scores: Mapping[str, float],
                    run_tag: str = "run", depth: int | None = None) -> "RankedList":
        entries = sort_scored(scores)
        if depth is not None:
            entries = entries[:depth]
        return cls(turn_id, entries, run_tag)

    def ids(self) -> list[str]:
        return [pid for pid, _ in self.entries]

    def scores(self) -> dict[str, float]:
        return {pid: score for pid, score in self.entries}

    def truncated(self, depth: int) -> "RankedList":
        return replace(self, entries=self.entries[:depth])

    def with_tag(self, run_tag: str) -> "RankedList":
        return replace(self, run_tag=run_tag)

    def __len__(self) -> int:
        return len(self.entries)
