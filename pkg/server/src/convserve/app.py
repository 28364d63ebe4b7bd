"""The HTTP layer: request parsing, validation, and dispatch.

Built on the standard library's threading HTTP server; the backends are
pure functions of the request, so concurrent requests need no locking.
Every successful response carries the model identifier of the endpoint
that produced it.  Errors are JSON too: 400 for malformed bodies, 404
for unknown paths, 413 for batches above the configured cap.
"""

from __future__ import annotations

import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

log = logging.getLogger("convserve")

DEFAULT_MAX_BATCH = 64


class BadRequest(Exception):
    pass


def _string_list(body: dict, key: str) -> list[str]:
    value = body.get(key)
    if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
        raise BadRequest(f"'{key}' must be a list of strings")
    return value


def _items(body: dict, key: str, fields: tuple[str, ...]) -> list[dict]:
    value = body.get(key)
    if not isinstance(value, list):
        raise BadRequest(f"'{key}' must be a list")
    for item in value:
        if not isinstance(item, dict) or any(
                not isinstance(item.get(f), str) for f in fields):
            raise BadRequest(
                f"every '{key}' item needs string fields {list(fields)}")
    return value


class _Handler(BaseHTTPRequestHandler):
    server: "ModelServer"

    def _reply(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, format: str, *args) -> None:
        log.debug("%s %s", self.address_string(), format % args)

    def do_GET(self) -> None:
        if self.path != "/health":
            self._reply(404, {"error": f"unknown path {self.path!r}"})
            return
        backend = self.server.backend
        self._reply(200, {"status": "ok", "backend": backend.name,
                          "model_ids": dict(backend.model_ids)})

    def do_POST(self) -> None:
        handler = {
            "/rewrite": self._rewrite,
            "/score": self._score,
            "/pairscore": self._pairscore,
            "/encode": self._encode,
        }.get(self.path)
        if handler is None:
            self._reply(404, {"error": f"unknown path {self.path!r}"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length).decode("utf-8"))
            if not isinstance(body, dict):
                raise BadRequest("request body must be a JSON object")
            handler(body)
        except (json.JSONDecodeError, UnicodeDecodeError):
            self._reply(400, {"error": "request body is not valid JSON"})
        except BadRequest as exc:
            self._reply(400, {"error": str(exc)})

    def _check_batch(self, n: int, what: str) -> bool:
        cap = self.server.max_batch
        if n > cap:
            self._reply(413, {"error": f"{n} {what} exceed the batch cap "
                                       f"of {cap}"})
            return False
        return True

    def _rewrite(self, body: dict) -> None:
        context = _string_list(body, "context")
        current = body.get("current")
        if not isinstance(current, str) or not current:
            raise BadRequest("'current' must be a non-empty string")
        rewritten, trimmed = self.server.backend.rewrite(context, current)
        self._reply(200, {"rewritten": rewritten, "trimmed": trimmed,
                          "model_id": self.server.backend.model_ids["rewrite"]})

    def _score(self, body: dict) -> None:
        query = body.get("query")
        if not isinstance(query, str):
            raise BadRequest("'query' must be a string")
        passages = _items(body, "passages", ("id", "text"))
        if not self._check_batch(len(passages), "passages"):
            return
        scores = self.server.backend.score(
            query, [p["text"] for p in passages])
        self._reply(200, {"scores": scores,
                          "model_id": self.server.backend.model_ids["score"]})

    def _pairscore(self, body: dict) -> None:
        query = body.get("query")
        if not isinstance(query, str):
            raise BadRequest("'query' must be a string")
        pairs = _items(body, "pairs", ("id_a", "text_a", "id_b", "text_b"))
        if not self._check_batch(len(pairs), "pairs"):
            return
        probs = self.server.backend.pair_probs(
            query, [(p["text_a"], p["text_b"]) for p in pairs])
        self._reply(200, {
            "probs": probs,
            "model_id": self.server.backend.model_ids["pairscore"]})

    def _encode(self, body: dict) -> None:
        texts = _string_list(body, "texts")
        if not self._check_batch(len(texts), "texts"):
            return
        vectors = self.server.backend.encode(texts)
        self._reply(200, {"vectors": vectors,
                          "dim": self.server.backend.dim,
                          "model_id": self.server.backend.model_ids["encode"]})


class ModelServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], backend,
                 max_batch: int = DEFAULT_MAX_BATCH):
        super().__init__(address, _Handler)
        self.backend = backend
        self.max_batch = max_batch


def create_server(host: str, port: int, backend,
                  max_batch: int = DEFAULT_MAX_BATCH) -> ModelServer:
    return ModelServer((host, port), backend, max_batch)


def serve(server: ModelServer) -> None:
    host, port = server.server_address[:2]
    log.info("serving %s backend on http://%s:%s", server.backend.name,
             host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
