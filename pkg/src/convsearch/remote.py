"""HTTP client for the model-serving sidecar.

The sidecar exposes four JSON endpoints (/rewrite, /score, /pairscore,
/encode); responses are order-preserving with respect to request items.
The endpoint root can be overridden with the CONVSEARCH_MODEL_SERVER
environment variable.
"""

from __future__ import annotations

import os

import numpy as np
import requests

from .errors import ProtocolError, TransportError

ENDPOINT_ENV_VAR = "CONVSEARCH_MODEL_SERVER"
DEFAULT_TIMEOUT = 60.0
DEFAULT_BATCH = 64


def resolve_endpoint(configured: str | None) -> str:
    endpoint = os.environ.get(ENDPOINT_ENV_VAR) or configured
    if not endpoint:
        raise TransportError(
            "no model server endpoint configured; set one in the pipeline "
            f"config or via {ENDPOINT_ENV_VAR}"
        )
    return endpoint.rstrip("/")


class ModelServerClient:
    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT,
                 batch_size: int = DEFAULT_BATCH, session=None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.batch_size = batch_size
        self.session = session or requests.Session()

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        try:
            response = self.session.post(url, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"model server unreachable at {url}: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(
                f"model server at {url} answered HTTP {response.status_code}: "
                f"{response.text[:200]}"
            )
        try:
            body = response.json()
        except ValueError as exc:
            raise ProtocolError(f"non-JSON response from {url}") from exc
        if not isinstance(body, dict):
            raise ProtocolError(f"response from {url} is not a JSON object")
        return body

    def health(self) -> dict:
        url = f"{self.base_url}/health"
        try:
            response = self.session.get(url, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"model server unreachable at {url}: {exc}") from exc
        return response.json()

    def rewrite(self, context: list[str], current: str) -> str:
        body = self._post("/rewrite", {"context": list(context), "current": current})
        rewritten = body.get("rewritten")
        if not isinstance(rewritten, str) or not rewritten:
            raise ProtocolError("/rewrite must return a non-empty 'rewritten' string")
        return rewritten

    def score(self, query: str, passages: list[tuple[str, str]]) -> list[float]:
        """Pointwise scores for (id, text) pairs, order-aligned with the input."""
        scores: list[float] = []
        for start in range(0, len(passages), self.batch_size):
            chunk = passages[start:start + self.batch_size]
            body = self._post("/score", {
                "query": query,
                "passages": [{"id": pid, "text": text} for pid, text in chunk],
            })
            got = body.get("scores")
            if not isinstance(got, list) or len(got) != len(chunk):
                raise ProtocolError(
                    f"/score returned {len(got) if isinstance(got, list) else 'no'} "
                    f"scores for {len(chunk)} passages"
                )
            scores.extend(float(s) for s in got)
        return scores

    def pairscore(self, query: str,
                  pairs: list[tuple[str, str, str, str]]) -> list[float]:
        """Preference probabilities for (id_a, text_a, id_b, text_b) tuples."""
        probs: list[float] = []
        for start in range(0, len(pairs), self.batch_size):
            chunk = pairs[start:start + self.batch_size]
            body = self._post("/pairscore", {
                "query": query,
                "pairs": [{"id_a": a, "text_a": ta, "id_b": b, "text_b": tb}
                          for a, ta, b, tb in chunk],
            })
            got = body.get("probs")
            if not isinstance(got, list) or len(got) != len(chunk):
                raise ProtocolError(
                    f"/pairscore returned {len(got) if isinstance(got, list) else 'no'} "
                    f"probabilities for {len(chunk)} pairs"
                )
            for p in got:
                p = float(p)
                if not 0.0 <= p <= 1.0:
                    raise ProtocolError(f"/pairscore probability {p} outside [0, 1]")
                probs.append(p)
        return probs

    def encode(self, texts: list[str]) -> np.ndarray:
        rows: list[list[float]] = []
        dim: int | None = None
        for start in range(0, len(texts), self.batch_size):
            chunk = texts[start:start + self.batch_size]
            body = self._post("/encode", {"texts": chunk})
            vectors = body.get("vectors")
            if not isinstance(vectors, list) or len(vectors) != len(chunk):
                raise ProtocolError("/encode returned a wrong-shaped vector list")
            if dim is None:
                dim = int(body.get("dim", len(vectors[0]) if vectors else 0))
            rows.extend(vectors)
        if dim is None:
            dim = 0
        matrix = np.asarray(rows, dtype=float)
        if matrix.size and matrix.shape[1] != dim:
            raise ProtocolError("/encode vector width disagrees with reported dim")
        return matrix.reshape((len(texts), dim)) if texts else np.zeros((0, dim))


class RemoteEncoder:
    """Adapter exposing the /encode endpoint with the encoder interface
    the vector store expects (encode_many plus an identifier)."""

    def __init__(self, client: ModelServerClient):
        self.client = client
        self.identifier = self._model_id()

    def _model_id(self) -> str:
        try:
            ids = self.client.health().get("model_ids", {})
        except (TransportError, ProtocolError, ValueError):
            return "remote"
        if isinstance(ids, dict) and isinstance(ids.get("encode"), str):
            return ids["encode"]
        return "remote"

    def encode(self, text: str) -> np.ndarray:
        return self.client.encode([text])[0]

    def encode_many(self, texts: list[str]) -> np.ndarray:
        return self.client.encode(list(texts))
