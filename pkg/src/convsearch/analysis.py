"""Explicit text-analysis chain: lowercase, tokenize, stopword removal, stemming.

The chain order is fixed and every choice is serialized into manifests, so
any two indexes can be compared on preprocessing provenance alone.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import porter, stopwords

TOKEN_RULE = "split-non-alphanumeric"
STEMMERS = ("none", "porter")

# Unicode letters and digits, underscore excluded.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class AnalyzerConfig:
    """Configuration of the analysis chain, stored alongside every index.

    ``stopword_list`` is either the name of an embedded list ("none",
    "english") or an explicit tuple of words.  ``catch_all`` selects whether
    title and body are concatenated into a single indexed field.
    """

    lowercase: bool = True
    token_rule: str = TOKEN_RULE
    stopword_list: str | tuple[str, ...] = "english"
    stemmer: str = "none"
    catch_all: bool = True

    def __post_init__(self):
        if self.token_rule != TOKEN_RULE:
            raise ValueError(f"unsupported token rule: {self.token_rule!r}")
        if self.stemmer not in STEMMERS:
            raise ValueError(f"unsupported stemmer: {self.stemmer!r}")
        if isinstance(self.stopword_list, list):
            object.__setattr__(self, "stopword_list", tuple(self.stopword_list))
        stopwords.resolve(self.stopword_list)  # fail fast on unknown names

    def resolved_stopwords(self) -> frozenset[str]:
        return stopwords.resolve(self.stopword_list)

    def stopword_hash(self) -> str:
        return stopwords.content_hash(self.stopword_list)

    def to_dict(self) -> dict:
        sw = self.stopword_list
        return {
            "lowercase": self.lowercase,
            "token_rule": self.token_rule,
            "stopword_list": list(sw) if isinstance(sw, tuple) else sw,
            "stopword_hash": self.stopword_hash(),
            "stemmer": self.stemmer,
            "catch_all": self.catch_all,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnalyzerConfig":
        sw = data.get("stopword_list", "english")
        if isinstance(sw, list):
            sw = tuple(sw)
        return cls(
            lowercase=data.get("lowercase", True),
            token_rule=data.get("token_rule", TOKEN_RULE),
            stopword_list=sw,
            stemmer=data.get("stemmer", "none"),
            catch_all=data.get("catch_all", True),
        )


def analyze(text: str, config: AnalyzerConfig) -> list[str]:
    """Run the full chain on raw text.  Deterministic; empty input yields [].

    Stage order is lowercase, tokenize, stopword removal, stemming.  Stopwords
    are matched against the token surface before stemming, so a stemmed form
    of a stopword survives only if its surface form was not on the list.
    """
    if config.lowercase:
        text = text.lower()
    tokens = _TOKEN_RE.findall(text)
    stops = config.resolved_stopwords()
    if stops:
        tokens = [t for t in tokens if t not in stops]
    if config.stemmer == "porter":
        tokens = [porter.stem(t) for t in tokens]
    return tokens
