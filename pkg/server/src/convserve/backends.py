"""Model backends: everything the endpoints can serve.

A backend supplies four operations and a model identifier per endpoint.
The echo backend answers every request as a pure function of its body,
so pipelines built on it are reproducible end to end; checkpoint-backed
backends plug in through the same interface.
"""

from __future__ import annotations

import hashlib
import math
import re

import numpy as np

# Sequence models cut their input off at 512 subword tokens; the echo
# backend stands in with whitespace tokens but keeps the same budget.
SUBWORD_LIMIT = 512


def overlap_tokens(text: str) -> set[str]:
    """Distinct maximal alphanumeric runs, lowercased."""
    out: set[str] = set()
    word: list[str] = []
    for ch in text.lower():
        if ch.isalnum():
            word.append(ch)
        elif word:
            out.add("".join(word))
            word.clear()
    if word:
        out.add("".join(word))
    return out


class EchoBackend:
    """Deterministic stand-in for the full model stack.

    Rewrites return the current utterance verbatim, scores count tokens
    shared with the query, pair preferences squash the score margin
    through a sigmoid, and vectors are seeded random projections of
    hashed token counts (dimension 128, wire-compatible with the
    consumer's built-in encoder, hence the shared identifier).
    """

    dim = 128
    seed = 13
    name = "echo"

    model_ids = {
        "rewrite": "echo-rewrite-v1",
        "score": "echo-overlap-v1",
        "pairscore": "echo-overlap-pairs-v1",
        "encode": "hashed-bag-v1",
    }

    def __init__(self) -> None:
        self._token_vectors: dict[str, np.ndarray] = {}

    def rewrite(self, context: list[str], current: str) -> tuple[str, bool]:
        """Echo the current utterance; report whether input was over budget."""
        budget = SUBWORD_LIMIT - len(current.split())
        used = 0
        trimmed = False
        for item in context:
            n = len(item.split())
            if used + n > budget:
                trimmed = True
                break
            used += n
        return current, trimmed

    def score(self, query: str, texts: list[str]) -> list[float]:
        q = overlap_tokens(query)
        return [float(len(q & overlap_tokens(text))) for text in texts]

    def pair_probs(self, query: str,
                   pairs: list[tuple[str, str]]) -> list[float]:
        q = overlap_tokens(query)
        out = []
        for text_a, text_b in pairs:
            margin = len(q & overlap_tokens(text_a)) - \
                len(q & overlap_tokens(text_b))
            out.append(1.0 / (1.0 + math.exp(-margin)))
        return out

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_vectors.get(token)
        if vec is None:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            rng = np.random.default_rng(
                [self.seed, int.from_bytes(digest[:8], "big")])
            vec = rng.standard_normal(self.dim)
            self._token_vectors[token] = vec
        return vec

    def encode(self, texts: list[str]) -> list[list[float]]:
        rows = []
        for text in texts:
            vec = np.zeros(self.dim)
            for token in re.findall(r"[a-z0-9]+", text.lower()):
                vec += self._token_vector(token)
            rows.append([float(x) for x in vec])
        return rows


BACKENDS = {"echo": EchoBackend}
