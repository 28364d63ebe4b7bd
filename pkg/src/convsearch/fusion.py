"""Ranked-list combination: reciprocal rank fusion and score mixing."""

from __future__ import annotations

from .errors import ConvSearchError
from .ranking import RankedList

DEFAULT_K_RRF = 60.0
DEFAULT_FUSE_DEPTH = 1000


def rrf_fuse(lists: list[RankedList], k_rrf: float = DEFAULT_K_RRF,
             depth: int = DEFAULT_FUSE_DEPTH,
             run_tag: str | None = None) -> RankedList:
    """RRF(d) = sum over lists of 1 / (k_rrf + rank(d)), rank from 1.

    Documents absent from a list contribute nothing for it. The fused
    list is sorted by score descending, ties broken by passage id, and
    truncated to `depth`.
    """
    if not lists:
        raise ConvSearchError("rrf_fuse needs at least one ranked list")
    if k_rrf <= 0:
        raise ConvSearchError(f"k_rrf must be positive, got {k_rrf}")
    turn_ids = {rl.turn_id for rl in lists}
    if len(turn_ids) != 1:
        raise ConvSearchError(f"cannot fuse lists from different turns: {sorted(turn_ids)}")
    fused: dict[str, float] = {}
    for ranked in lists:
        for rank, (pid, _) in enumerate(ranked.entries, start=1):
            fused[pid] = fused.get(pid, 0.0) + 1.0 / (k_rrf + rank)
    tag = run_tag if run_tag is not None else lists[0].run_tag
    return RankedList.from_scores(lists[0].turn_id, fused, tag, depth=depth)


def _min_max(ranked: RankedList) -> dict[str, float]:
    values = [score for _, score in ranked.entries]
    lo, hi = min(values), max(values)
    if hi == lo:
        # A constant list carries no preference signal; place every
        # member at the top of the normalized range.
        return {pid: 1.0 for pid, _ in ranked.entries}
    span = hi - lo
    return {pid: (score - lo) / span for pid, score in ranked.entries}


def score_combine(list_a: RankedList, list_b: RankedList,
                  w_a: float, w_b: float,
                  normalization: str = "min-max",
                  depth: int | None = None,
                  run_tag: str | None = None) -> RankedList:
    """Weighted sum w_a*s_a + w_b*s_b over the union of both lists.

    With min-max normalization each list's extremes map to 0 and 1
    before weighting. A document missing from one list contributes 0
    for that side.
    """
    if w_a < 0 or w_b < 0:
        raise ConvSearchError("combination weights must be non-negative")
    if w_a == 0 and w_b == 0:
        raise ConvSearchError("combination weights must not both be zero")
    if normalization not in ("none", "min-max"):
        raise ConvSearchError(f"unknown normalization {normalization!r}")
    if list_a.turn_id != list_b.turn_id:
        raise ConvSearchError(
            f"cannot combine lists from different turns: "
            f"{list_a.turn_id!r} vs {list_b.turn_id!r}"
        )
    if normalization == "min-max":
        scores_a = _min_max(list_a) if list_a.entries else {}
        scores_b = _min_max(list_b) if list_b.entries else {}
    else:
        scores_a = list_a.scores()
        scores_b = list_b.scores()
    combined = {
        pid: w_a * scores_a.get(pid, 0.0) + w_b * scores_b.get(pid, 0.0)
        for pid in scores_a.keys() | scores_b.keys()
    }
    tag = run_tag if run_tag is not None else list_a.run_tag
    return RankedList.from_scores(list_a.turn_id, combined, tag, depth=depth)
