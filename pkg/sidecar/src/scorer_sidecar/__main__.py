"""Command-line entry: serve the scorer protocol over stdio or TCP."""
from __future__ import annotations

import argparse
import logging
import sys

from .backends import make_backend
from .config import SidecarConfig
from .server import serve_stdio, serve_tcp


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="scorer-sidecar",
        description="Serve per-token target log-probabilities and sentence embeddings",
    )
    transport = parser.add_mutually_exclusive_group(required=True)
    transport.add_argument("--stdio", action="store_true", help="serve on stdin/stdout")
    transport.add_argument("--port", type=int, help="serve TCP on this port")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--backend", choices=["auto", "hf", "hashed"], default="auto")
    parser.add_argument("--generator-model", default=SidecarConfig.generator_model)
    parser.add_argument("--sentence-embedder", default=SidecarConfig.sentence_embedder)
    parser.add_argument("--max-context-tokens", type=int, default=512)
    parser.add_argument("--max-target-tokens", type=int, default=128)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--embed-dim", type=int, default=64)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    config = SidecarConfig(
        generator_model=args.generator_model,
        sentence_embedder=args.sentence_embedder,
        max_context_tokens=args.max_context_tokens,
        max_target_tokens=args.max_target_tokens,
        device=args.device,
        embed_dim=args.embed_dim,
    )
    backend = make_backend(args.backend, config)
    if args.stdio:
        return serve_stdio(backend)
    return serve_tcp(backend, args.host, args.port)


if __name__ == "__main__":
    sys.exit(main())
