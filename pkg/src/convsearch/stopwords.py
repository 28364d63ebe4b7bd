"""Versioned stopword lists embedded in the repository.

Index manifests store the content hash of the list they were built with, so
two indexes are comparable only when their stopword provenance matches.  The
single-letter entries cover contraction fragments left behind by the
split-on-non-alphanumeric tokenizer ("don't" tokenizes to "don", "t").
"""

from __future__ import annotations

import hashlib

ENGLISH_NAME = "english-v1"

ENGLISH: tuple[str, ...] = (
    "a", "about", "above", "after", "again", "against", "ain", "all", "am",
    "an", "and", "any", "are", "aren", "as", "at", "be", "because", "been",
    "before", "being", "below", "between", "both", "but", "by", "can",
    "couldn", "d", "did", "didn", "do", "does", "doesn", "doing", "don",
    "down", "during", "each", "few", "for", "from", "further", "had", "hadn",
    "has", "hasn", "have", "haven", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is",
    "isn", "it", "its", "itself", "just", "ll", "m", "ma", "me", "mightn",
    "more", "most", "mustn", "my", "myself", "needn", "no", "nor", "not",
    "now", "o", "of", "off", "on", "once", "only", "or", "other", "our",
    "ours", "ourselves", "out", "over", "own", "re", "s", "same", "shan",
    "she", "should", "shouldn", "so", "some", "such", "t", "than", "that",
    "the", "their", "theirs", "them", "themselves", "then", "there", "these",
    "they", "this", "those", "through", "to", "too", "under", "until", "up",
    "ve", "very", "was", "wasn", "we", "were", "weren", "what", "when",
    "where", "which", "while", "who", "whom", "why", "will", "with", "won",
    "wouldn", "y", "you", "your", "yours", "yourself", "yourselves",
)

_NAMED_LISTS: dict[str, tuple[str, ...]] = {
    "none": (),
    ENGLISH_NAME: ENGLISH,
    "english": ENGLISH,  # alias for the current versioned list
}


def resolve(spec: str | tuple[str, ...]) -> frozenset[str]:
    """Resolve a list name or an explicit word tuple to a stopword set."""
    if isinstance(spec, str):
        try:
            return frozenset(_NAMED_LISTS[spec])
        except KeyError:
            raise KeyError(f"unknown stopword list name: {spec!r}") from None
    return frozenset(spec)


def content_hash(spec: str | tuple[str, ...]) -> str:
    """SHA-256 over the sorted word list; the provenance value stored in manifests."""
    words = sorted(resolve(spec))
    return hashlib.sha256("\n".join(words).encode("utf-8")).hexdigest()
