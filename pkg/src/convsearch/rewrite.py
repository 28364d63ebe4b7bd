"""Conversational query rewriting.

Two context layouts feed the rewriter. The original layout keeps every
raw query and the responses of the three most recent turns, with no
budget handling beyond an overflow flag. The improved layout uses the
accumulated rewrites plus the previous response, trimmed from the end
to honor a token budget; if removing the response entirely is not
enough, the oldest rewrites are dropped. The current query is never
touched.

Token counting here is whitespace-based. A remote model server may
re-trim against its own subword limit; that check is out of scope for
this module.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConvSearchError, MissingResponseError
from .stopwords import resolve as resolve_stopwords

DEFAULT_SEPARATOR = "|||"
RESPONSE_WINDOW = 3

_WORD_RE = re.compile(r"[a-z0-9]+")


def count_tokens(text: str) -> int:
    return len(text.split())


@dataclass
class Turn:
    """One user utterance within a conversation.

    `rewrite` starts unset and is filled in as the pipeline processes
    the conversation front to back.
    """

    index: int
    raw_query: str
    canonical_response: str | None = None
    canonical_response_id: str | None = None
    rewrite: str | None = None

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ConvSearchError(f"turn index must be >= 1, got {self.index}")
        if not self.raw_query or not self.raw_query.strip():
            raise ConvSearchError(f"turn {self.index} has an empty query")


@dataclass
class Conversation:
    conversation_id: str
    turns: list[Turn] = field(default_factory=list)

    def __post_init__(self) -> None:
        indices = [t.index for t in self.turns]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ConvSearchError(
                f"conversation {self.conversation_id}: turn indices must be "
                f"strictly increasing, got {indices}"
            )

    def __len__(self) -> int:
        return len(self.turns)


@dataclass(frozen=True)
class ContextBudget:
    max_tokens: int = 512

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ConvSearchError("context budget must be at least 1 token")


@dataclass(frozen=True)
class ContextResult:
    """A built rewriter input: ordered elements, last one the current query."""

    items: tuple[str, ...]
    token_count: int
    overflow: bool = False
    response_trimmed: bool = False
    dropped_history: int = 0

    def joined(self, separator: str = DEFAULT_SEPARATOR) -> str:
        return f" {separator} ".join(self.items)

    def to_dict(self) -> dict:
        return {
            "items": list(self.items),
            "token_count": self.token_count,
            "overflow": self.overflow,
            "response_trimmed": self.response_trimmed,
            "dropped_history": self.dropped_history,
        }


def _total_tokens(items: list[str]) -> int:
    return sum(count_tokens(item) for item in items)


def build_context_original(turns: list[Turn],
                           budget: ContextBudget | None = None) -> ContextResult:
    """All raw queries, plus responses for the last three previous turns.

    Never trims; sets `overflow` when the sequence exceeds the budget.
    """
    if not turns:
        raise ConvSearchError("cannot build context for an empty turn list")
    budget = budget or ContextBudget()
    i = len(turns)
    with_response = set(range(max(0, i - 1 - RESPONSE_WINDOW), i - 1))
    items: list[str] = []
    for pos, turn in enumerate(turns[:-1]):
        items.append(turn.raw_query)
        if pos in with_response and turn.canonical_response is not None:
            items.append(turn.canonical_response)
    items.append(turns[-1].raw_query)
    total = _total_tokens(items)
    return ContextResult(tuple(items), total, overflow=total > budget.max_tokens)


def build_context_improved(turns: list[Turn],
                           budget: ContextBudget | None = None) -> ContextResult:
    """Accumulated rewrites, trimmed previous response, current query.

    The previous response loses tokens from its end first; if the budget
    is still exceeded with the response gone, the oldest rewrites are
    dropped whole. The current query is never trimmed.
    """
    if not turns:
        raise ConvSearchError("cannot build context for an empty turn list")
    budget = budget or ContextBudget()
    current = turns[-1].raw_query
    current_len = count_tokens(current)
    if budget.max_tokens < current_len + 1:
        raise ConvSearchError(
            f"context budget {budget.max_tokens} cannot hold the current "
            f"query ({current_len} tokens) plus any context"
        )
    if len(turns) == 1:
        return ContextResult((current,), current_len)

    history = turns[:-1]
    for turn in history:
        if turn.rewrite is None:
            raise ConvSearchError(
                f"turn {turn.index} has no rewrite yet; turns must be "
                "processed in order"
            )
    previous = history[-1]
    if previous.canonical_response is None:
        raise MissingResponseError(
            f"turn {previous.index} has no canonical response; cannot build "
            f"context for turn {turns[-1].index}"
        )

    rewrites = [t.rewrite for t in history]
    response_tokens = previous.canonical_response.split()

    fixed = _total_tokens(rewrites) + current_len
    allowed_response = budget.max_tokens - fixed
    if allowed_response >= len(response_tokens):
        items = [*rewrites, previous.canonical_response, current]
        return ContextResult(tuple(items), fixed + len(response_tokens))

    if allowed_response > 0:
        kept = " ".join(response_tokens[:allowed_response])
        items = [*rewrites, kept, current]
        return ContextResult(tuple(items), budget.max_tokens,
                             response_trimmed=True)

    dropped = 0
    while rewrites and _total_tokens(rewrites) + current_len > budget.max_tokens:
        rewrites.pop(0)
        dropped += 1
    items = [*rewrites, current]
    return ContextResult(tuple(items), _total_tokens(items),
                         response_trimmed=True, dropped_history=dropped)


class Rewriter:
    """Base interface: turn a built context into a standalone query."""

    name = "base"

    def rewrite_query(self, context: ContextResult) -> str:
        raise NotImplementedError


class IdentityRewriter(Rewriter):
    name = "identity"

    def rewrite_query(self, context: ContextResult) -> str:
        return context.items[-1]


class HistoryAppendRewriter(Rewriter):
    """Append recent non-stopword history terms absent from the query.

    History tokens are scanned most-recent-first; each surviving term is
    appended once, in scan order. With history "tell me about jupiter"
    and query "how big is it" this yields "how big is it jupiter tell".
    """

    name = "history-append"

    def __init__(self, stopwords: str | tuple[str, ...] = "english",
                 max_terms: int | None = None):
        self.stopwords = resolve_stopwords(stopwords)
        self.max_terms = max_terms

    def rewrite_query(self, context: ContextResult) -> str:
        current = context.items[-1]
        present = set(_WORD_RE.findall(current.lower()))
        stream: list[str] = []
        for item in context.items[:-1]:
            stream.extend(_WORD_RE.findall(item.lower()))
        picked: list[str] = []
        seen: set[str] = set()
        for token in reversed(stream):
            if token in seen or token in present or token in self.stopwords:
                continue
            seen.add(token)
            picked.append(token)
            if self.max_terms is not None and len(picked) >= self.max_terms:
                break
        if not picked:
            return current
        return current + " " + " ".join(picked)


class RemoteRewriter(Rewriter):
    """Delegates to a model server; context travels as an ordered list."""

    name = "remote"

    def __init__(self, client, model_hint: str | None = None):
        self.client = client
        self.model_hint = model_hint
        if model_hint:
            self.name = f"remote-{model_hint}"

    def rewrite_query(self, context: ContextResult) -> str:
        history = list(context.items[:-1])
        return self.client.rewrite(history, context.items[-1])
