"""Topic file loading: conversations with turns and canonical responses.

The accepted file is a JSON array of conversation objects:

    [{"number": "106",
      "turn": [{"number": 1,
                "raw_utterance": "...",
                "canonical_result_id": "MARCO_123"}, ...]}, ...]

`turns` is accepted as an alias for `turn`, `utterance` for
`raw_utterance`, and `canonical_response_id` for `canonical_result_id`.
A turn may also carry inline `canonical_response` text, which takes
precedence over id resolution. Turn ids are `<conversation>_<turn>`.
"""

from __future__ import annotations

import json
from pathlib import Path

from .corpus import Corpus
from .errors import FormatError
from .rewrite import Conversation, Turn


def turn_id(conversation: Conversation, turn: Turn) -> str:
    return f"{conversation.conversation_id}_{turn.index}"


def _first_key(record: dict, keys: tuple[str, ...], context: str):
    for key in keys:
        if key in record:
            return record[key]
    raise FormatError(f"{context}: none of {keys} present")


def _parse_turn(record: dict, context: str) -> Turn:
    if not isinstance(record, dict):
        raise FormatError(f"{context}: turn entry is not an object")
    index = _first_key(record, ("number", "index"), context)
    utterance = _first_key(record, ("raw_utterance", "utterance"), context)
    if not isinstance(utterance, str):
        raise FormatError(f"{context}: utterance must be a string")
    response_id = record.get("canonical_result_id",
                             record.get("canonical_response_id"))
    response = record.get("canonical_response")
    try:
        return Turn(
            index=int(index),
            raw_query=utterance,
            canonical_response=response,
            canonical_response_id=(str(response_id)
                                   if response_id is not None else None),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{context}: {exc}") from exc


def parse_topics(data) -> list[Conversation]:
    if not isinstance(data, list):
        raise FormatError("topic file must be a JSON array of conversations")
    conversations: list[Conversation] = []
    for pos, record in enumerate(data):
        context = f"conversation #{pos}"
        if not isinstance(record, dict):
            raise FormatError(f"{context}: not an object")
        number = _first_key(record, ("number", "id"), context)
        conv_id = str(number)
        raw_turns = _first_key(record, ("turn", "turns"), context)
        if not isinstance(raw_turns, list) or not raw_turns:
            raise FormatError(f"{context}: needs a non-empty turn list")
        turns = [_parse_turn(t, f"conversation {conv_id}, turn #{k}")
                 for k, t in enumerate(raw_turns)]
        conversations.append(Conversation(conv_id, turns))
    return conversations


def load_topics(path: str | Path) -> list[Conversation]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return parse_topics(data)


def resolve_responses(conversations: list[Conversation],
                      corpus: Corpus) -> list[tuple[str, str]]:
    """Fill canonical response text from the corpus by response id.

    Inline response text is left alone. Returns (turn-id, response-id)
    pairs for every reference that could not be resolved; those turns
    keep canonical_response = None so the pipeline can decide how to
    degrade.
    """
    missing: list[tuple[str, str]] = []
    for conversation in conversations:
        for turn in conversation.turns:
            if turn.canonical_response is not None:
                continue
            rid = turn.canonical_response_id
            if rid is None:
                continue
            if rid in corpus:
                turn.canonical_response = corpus.raw_text(rid)
            else:
                missing.append((turn_id(conversation, turn), rid))
    return missing
