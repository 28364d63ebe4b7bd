"""Command line for the sidecar: pick a backend, bind, serve."""

from __future__ import annotations

import argparse
import logging
import sys

from .app import DEFAULT_MAX_BATCH, create_server, serve
from .backends import BACKENDS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convserve",
        description="Model inference sidecar speaking HTTP/JSON.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8123)
    parser.add_argument("--backend", default="echo",
                        help="model backend to load (default: echo)")
    parser.add_argument("--max-batch", type=int, default=DEFAULT_MAX_BATCH,
                        help="largest accepted batch; bigger requests get 413")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(message)s")

    factory = BACKENDS.get(args.backend)
    if factory is None:
        print(f"error: cannot load backend {args.backend!r}; "
              f"available: {', '.join(sorted(BACKENDS))}", file=sys.stderr)
        return 2
    try:
        backend = factory()
    except Exception as exc:  # refuse to start on any load failure
        print(f"error: backend {args.backend!r} failed to load: {exc}",
              file=sys.stderr)
        return 2
    if args.max_batch < 1:
        print("error: --max-batch must be at least 1", file=sys.stderr)
        return 2

    server = create_server(args.host, args.port, backend, args.max_batch)
    print(f"convserve: {args.backend} backend listening on "
          f"http://{args.host}:{server.server_address[1]}", flush=True)
    serve(server)
    return 0


def entry_point() -> None:
    sys.exit(main())
