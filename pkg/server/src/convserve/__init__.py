"""HTTP/JSON sidecar hosting rewrite, scoring, and encoding models.

The retrieval pipelines stay model-free by delegating every learned
component to this server.  The wire protocol is four POST endpoints
(/rewrite, /score, /pairscore, /encode) plus GET /health; all responses
carry the serving model's identifier so run provenance survives in the
consumer's manifests.
"""

from .app import create_server, serve
from .backends import BACKENDS, EchoBackend

__all__ = ["BACKENDS", "EchoBackend", "create_server", "serve"]

__version__ = "0.1.0"
