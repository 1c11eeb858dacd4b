"""Sidecar configuration: model identifiers and protocol limits."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SidecarConfig:
    """Which models to serve and the hard token limits applied to requests.

    The limits match the intended inference settings: 512 tokens for the
    combined encoder text (context first, passages second, so over-length
    input truncates the passage before the context) and 128 for the target.
    """

    generator_model: str = "facebook/bart-large"
    sentence_embedder: str = "sentence-transformers/stsb-roberta-large"
    max_context_tokens: int = 512
    max_target_tokens: int = 128
    device: str = "cpu"
    embed_dim: int = 64  # hashed backend only; neural models fix their own

    def __post_init__(self):
        if self.max_context_tokens < 1 or self.max_target_tokens < 1:
            raise ValueError("token limits must be >= 1")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
