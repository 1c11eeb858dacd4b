"""Scorer sidecar: serves token log-probabilities and sentence embeddings
over a newline-delimited JSON protocol, backed by pretrained models or a
deterministic offline stand-in."""

from .backends import HashedBackend, make_backend
from .config import SidecarConfig
from .server import RequestHandler, serve_stdio, serve_tcp

__version__ = "0.1.0"
