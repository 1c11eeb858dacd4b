"""Scoring backends: real pretrained models, or a deterministic stand-in.

A backend answers two calls: ``score`` returns one row of target-token
log-probabilities per passage (one row when the passage list is empty; the
encoder text is context first, passage second) plus token-pooled
per-passage embeddings, and ``embed`` returns L2-normalized sentence
vectors. Retrieval and marginalization deliberately do not live here.
"""
from __future__ import annotations

import hashlib
import logging
import math

import numpy as np

from .config import SidecarConfig

logger = logging.getLogger(__name__)


def _hash01(*parts: str) -> float:
    digest = hashlib.blake2b("\x1f".join(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2**64


class HashedBackend:
    """Deterministic offline stand-in with the real backends' contract.

    Log-probabilities are pseudo-random but pure functions of (context,
    passage, target token, position), strictly negative; embeddings are
    signed hashed bag-of-words vectors.
    """

    def __init__(self, config: SidecarConfig):
        self.config = config
        self.fingerprint = f"hashed:dim={config.embed_dim}:v1"

    def _truncate(self, tokens: list[str], limit: int) -> tuple[list[str], bool]:
        if len(tokens) > limit:
            return tokens[:limit], True
        return tokens, False

    def _bow(self, text: str) -> list[float]:
        vec = np.zeros(self.config.embed_dim, dtype=np.float64)
        for token in text.lower().split():
            h = int.from_bytes(
                hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little"
            )
            sign = 1.0 if (h >> 62) & 1 else -1.0
            vec[h % self.config.embed_dim] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return [float(v) for v in vec]

    def score(self, context: str, passages: list[str], target: str, want_embedding: bool):
        target_tokens, target_truncated = self._truncate(
            target.split(), self.config.max_target_tokens
        )
        rows = []
        embeddings = [] if want_embedding else None
        truncated = target_truncated
        for passage in passages or [""]:
            encoder_tokens = context.split() + passage.split()
            encoder_tokens, enc_truncated = self._truncate(
                encoder_tokens, self.config.max_context_tokens
            )
            truncated = truncated or enc_truncated
            encoder_text = " ".join(encoder_tokens)
            row = [
                -(0.05 + 2.95 * _hash01(encoder_text, token, str(j)))
                for j, token in enumerate(target_tokens)
            ]
            rows.append(row)
            if embeddings is not None:
                embeddings.append(self._bow(encoder_text + " " + " ".join(target_tokens)))
        return rows, len(target_tokens), embeddings, truncated

    def embed(self, texts: list[str]):
        truncated = False
        out = []
        for text in texts:
            tokens, was_truncated = self._truncate(
                text.split(), self.config.max_context_tokens
            )
            truncated = truncated or was_truncated
            out.append(self._bow(" ".join(tokens)))
        return out, truncated


class HFBackend:
    """Pretrained encoder-decoder scoring plus dense sentence embeddings.

    Per-passage rows condition the generator on ``context <sep> passage``
    (context first so truncation eats the passage, not the context); target
    log-probabilities are gathered from the decoder's log-softmax under
    teacher forcing. Per-passage embeddings mean-pool the encoder states;
    ``embed`` mean-pools the sentence-embedder states. Everything runs in
    eval mode, so responses are deterministic for pinned model versions.
    """

    def __init__(self, config: SidecarConfig):
        import torch
        from transformers import AutoModel, AutoModelForSeq2SeqLM, AutoTokenizer

        self._torch = torch
        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.generator_model)
        self.generator = (
            AutoModelForSeq2SeqLM.from_pretrained(config.generator_model)
            .to(config.device)
            .eval()
        )
        self.embed_tokenizer = AutoTokenizer.from_pretrained(config.sentence_embedder)
        self.embedder = (
            AutoModel.from_pretrained(config.sentence_embedder).to(config.device).eval()
        )
        self.fingerprint = (
            f"hf:{config.generator_model}@{self.generator.config.transformers_version}"
            f"+{config.sentence_embedder}"
        )

    def _encode(self, text: str, limit: int):
        ids = self.tokenizer(
            text, truncation=True, max_length=limit, return_tensors="pt",
            return_overflowing_tokens=False,
        )
        truncated = len(self.tokenizer(text)["input_ids"]) > limit
        return {k: v.to(self.config.device) for k, v in ids.items()}, truncated

    def score(self, context: str, passages: list[str], target: str, want_embedding: bool):
        torch = self._torch
        sep = self.tokenizer.sep_token or self.tokenizer.eos_token or ""
        target_ids, target_truncated = self._encode(target, self.config.max_target_tokens)
        labels = target_ids["input_ids"]
        token_count = int(labels.shape[1])
        rows = []
        embeddings = [] if want_embedding else None
        truncated = target_truncated
        with torch.no_grad():
            for passage in passages or [""]:
                text = f"{context} {sep} {passage}".strip() if passage else context
                enc, enc_truncated = self._encode(text, self.config.max_context_tokens)
                truncated = truncated or enc_truncated
                output = self.generator(**enc, labels=labels)
                logprobs = torch.log_softmax(output.logits, dim=-1)
                picked = logprobs.gather(-1, labels.unsqueeze(-1)).squeeze(-1)[0]
                picked = torch.clamp(picked, max=0.0)
                rows.append([float(v) for v in picked])
                if embeddings is not None:
                    states = self.generator.get_encoder()(**enc).last_hidden_state[0]
                    pooled = states.mean(dim=0)
                    pooled = pooled / pooled.norm().clamp(min=1e-12)
                    embeddings.append([float(v) for v in pooled])
        return rows, token_count, embeddings, truncated

    def embed(self, texts: list[str]):
        torch = self._torch
        out = []
        truncated = False
        with torch.no_grad():
            for text in texts:
                enc = self.embed_tokenizer(
                    text, truncation=True, max_length=self.config.max_context_tokens,
                    return_tensors="pt",
                ).to(self.config.device)
                truncated = truncated or (
                    len(self.embed_tokenizer(text)["input_ids"])
                    > self.config.max_context_tokens
                )
                states = self.embedder(**enc).last_hidden_state[0]
                pooled = states.mean(dim=0)
                pooled = pooled / pooled.norm().clamp(min=1e-12)
                out.append([float(v) for v in pooled])
        return out, truncated


def make_backend(kind: str, config: SidecarConfig):
    if kind == "hashed":
        return HashedBackend(config)
    if kind == "hf":
        return HFBackend(config)
    if kind == "auto":
        try:
            return HFBackend(config)
        except Exception as exc:  # missing weights, no torch, offline hub
            logger.warning("falling back to hashed backend: %s", exc)
            return HashedBackend(config)
    raise ValueError(f"unknown backend '{kind}'")
