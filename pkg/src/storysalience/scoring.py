"""Scorer boundary, mixture-of-passages marginalization, and coherence.

A scorer turns (context, passages, target) into per-passage token
log-probabilities plus pooled embeddings. The reference scorer is a
deterministic additive-smoothed word n-gram model so the whole pipeline runs
offline; a remote scorer speaking the same contract lives in ``remote``.
"""
from __future__ import annotations

import hashlib
import math
import statistics
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from .corpus import Block, Story
from .embeddings import HashedBowEmbedder
from .errors import EmptyCorpusError, ScorerUnavailableError, ShapeError
from .retrieval import (
    EMPTY_RETRIEVAL,
    KnowledgeBase,
    MemoryCache,
    PassageRecord,
    PassageSource,
    RetrievalMode,
    RetrievedSet,
    retrieve,
)

_BOUNDARY = "\x00"


@dataclass(frozen=True)
class ScoreRequest:
    context_text: str
    passages: tuple[str, ...]
    target_text: str
    want_embedding: bool = True


@dataclass(frozen=True)
class ScoreResponse:
    """Per-passage token log-probs, row count = max(1, passage count)."""

    logprobs: np.ndarray  # [rows, target_token_count], natural log, <= 0
    target_token_count: int
    embeddings: np.ndarray | None  # [rows, dim] or None
    fingerprint: str

    def __post_init__(self):
        if self.logprobs.ndim != 2:
            raise ShapeError("logprobs must be a 2-d matrix")
        if self.logprobs.shape[1] != self.target_token_count:
            raise ShapeError(
                f"logprob columns {self.logprobs.shape[1]} != token count {self.target_token_count}"
            )
        if self.embeddings is not None and self.embeddings.shape[0] != self.logprobs.shape[0]:
            raise ShapeError("embeddings rows must match logprob rows")


@dataclass(frozen=True)
class CoherenceResult:
    avg_log_likelihood: float
    token_count: int
    pooled_embedding: np.ndarray | None


@dataclass(frozen=True)
class PerplexityReport:
    mode: str
    median: float
    per_block: tuple[float, ...]
    block_ids: tuple[int, ...]
    fingerprint: str


class Scorer(Protocol):
    fingerprint: str

    def score(self, request: ScoreRequest) -> ScoreResponse: ...

    def embed_text(self, text: str) -> np.ndarray: ...


def marginalize(response: ScoreResponse, weights: Sequence[float]) -> np.ndarray:
    """Per-token log of the weighted passage mixture, log Σ_z w_z exp(logp_z,t).

    Computed by log-sum-exp with max-subtraction. A single row, or a one-hot
    weight vector, returns the selected row exactly.
    """
    rows = response.logprobs
    if len(weights) != rows.shape[0]:
        raise ShapeError(f"{len(weights)} weights for {rows.shape[0]} logprob rows")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0.0):
        raise ValueError("mixture weights must be non-negative")
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {w.sum()}, expected 1")
    if rows.shape[0] == 1:
        return rows[0].astype(np.float64).copy()
    nonzero = np.nonzero(w)[0]
    if len(nonzero) == 1:
        return rows[nonzero[0]].astype(np.float64).copy()
    logw = np.full_like(w, -np.inf)
    logw[nonzero] = np.log(w[nonzero])
    shifted = rows.astype(np.float64) + logw[:, None]
    peak = shifted.max(axis=0)
    return peak + np.log(np.exp(shifted - peak[None, :]).sum(axis=0))


def coherence(
    block: Block,
    retrieved: RetrievedSet,
    scorer: Scorer,
    want_embedding: bool = True,
) -> CoherenceResult:
    """Length-normalized marginal log-likelihood of the block's target text.

    The pooled embedding is the retrieval-weighted average of the scorer's
    per-passage embeddings. An empty retrieval set scores through the same
    path as a single empty pseudo-passage.
    """
    if not block.target:
        raise ValueError(f"block {block.block_id} has no target")
    passages = tuple(retrieved.texts())
    weights = retrieved.weights() if passages else [1.0]
    request = ScoreRequest(
        context_text=block.context_text,
        passages=passages,
        target_text=block.target_text,
        want_embedding=want_embedding,
    )
    try:
        response = scorer.score(request)
    except ScorerUnavailableError as exc:
        raise ScorerUnavailableError(f"block {block.block_id}: {exc}") from exc
    marginal = marginalize(response, weights)
    avg = float(marginal.sum() / response.target_token_count)
    pooled = None
    if want_embedding and response.embeddings is not None:
        pooled = np.asarray(weights, dtype=np.float64) @ response.embeddings
    return CoherenceResult(
        avg_log_likelihood=avg,
        token_count=response.target_token_count,
        pooled_embedding=pooled,
    )


def perplexity(
    blocks: Sequence[Block],
    mode: RetrievalMode,
    scorer: Scorer,
    kb: KnowledgeBase | None = None,
    cache: MemoryCache | None = None,
    k: int = 20,
    rng: np.random.Generator | None = None,
) -> PerplexityReport:
    """Median per-block perplexity under one retrieval mode.

    Blocks are scored in ascending id order; each block's target is embedded
    and inserted into memory only after that block is scored, so retrieval
    can never see its own target.
    """
    if not blocks:
        raise ValueError("perplexity needs at least one block")
    per_block = []
    for block in blocks:
        retrieved = EMPTY_RETRIEVAL
        if mode is not RetrievalMode.OFF:
            query = scorer.embed_text(block.context_text)
            retrieved = retrieve(query, kb, cache, k, mode, rng)
        result = coherence(block, retrieved, scorer, want_embedding=False)
        per_block.append(math.exp(-result.avg_log_likelihood))
        if cache is not None:
            cache.insert(
                PassageRecord(
                    passage_id=f"mem-{block.block_id:08d}",
                    text=block.target_text,
                    embedding=scorer.embed_text(block.target_text),
                    source=PassageSource.MEMORY,
                    memory_id=block.block_id,
                )
            )
    return PerplexityReport(
        mode=mode.value,
        median=float(statistics.median(per_block)),
        per_block=tuple(per_block),
        block_ids=tuple(b.block_id for b in blocks),
        fingerprint=scorer.fingerprint,
    )


class ReferenceScorer:
    """Additive-smoothed word n-gram scorer with request-conditioned counts.

    Trained counts come from the corpus; at order >= 2 each request also
    adds a presence count of one for every distinct n-gram of its own
    conditioning stream (passage text prepended to the context), which is
    how retrieved passages influence target predictions inside a bounded
    Markov window. Presence rather than frequency keeps repeated context
    free: deleting one of two adjacent duplicate sentences changes nothing.
    At order 1 the model sees no conditioning text at all, making it
    context-insensitive by construction. The smoothing denominator uses a
    fixed pseudo-vocabulary size (train vocabulary + 1) so unseen words keep
    probabilities below 1. Immutable once built: concurrent ``score`` calls
    are safe.

    Embeddings are L2-normalized hashed bag-of-words vectors over the token
    stream the model's probabilities can depend on: conditioning + target at
    order >= 2, target only at order 1.
    """

    def __init__(
        self,
        corpus: Iterable[Story],
        order: int = 2,
        smoothing: float = 0.1,
        dim: int = 768,
    ):
        if order < 1:
            raise ValueError("order must be >= 1")
        if smoothing <= 0:
            raise ValueError("smoothing must be > 0")
        self.order = order
        self.smoothing = smoothing
        self._embedder = HashedBowEmbedder(dim=dim)
        self._grams: Counter = Counter()
        self._hists: Counter = Counter()
        vocab: set[str] = set()
        digest = hashlib.sha256()
        total_tokens = 0
        for story in corpus:
            for chapter in story.chapters:
                tokens = []
                for sentence in chapter.sentences:
                    tokens.extend(sentence.text.split())
                total_tokens += len(tokens)
                vocab.update(tokens)
                digest.update(" ".join(tokens).encode("utf-8"))
                digest.update(b"\x1e")
                self._count_stream([_BOUNDARY] * (order - 1) + tokens, self._grams, self._hists)
        if total_tokens == 0:
            raise EmptyCorpusError("reference scorer corpus has no tokens")
        self.vocab_size = len(vocab) + 1
        self._corpus_hash = digest.hexdigest()[:12]
        self.fingerprint = (
            f"ngram:order={order}:alpha={smoothing}:dim={dim}:corpus={self._corpus_hash}"
        )

    def _count_stream(self, tokens: list[str], grams: Counter, hists: Counter) -> None:
        k = self.order
        for i in range(len(tokens) - k + 1):
            gram = tuple(tokens[i : i + k])
            grams[gram] += 1
            hists[gram[:-1]] += 1

    def embed_text(self, text: str) -> np.ndarray:
        return self._embedder.embed(text)

    @property
    def dim(self) -> int:
        return self._embedder.dim

    def _row(self, passage: str, context_tokens: list[str], target_tokens: list[str]):
        k = self.order
        passage_tokens = passage.split()
        conditioning = passage_tokens + context_tokens
        dyn_grams: set[tuple] = set()
        dyn_hists: set[tuple] = set()
        if k >= 2:
            for i in range(len(conditioning) - k + 1):
                gram = tuple(conditioning[i : i + k])
                dyn_grams.add(gram)
                dyn_hists.add(gram[:-1])
        stream = [_BOUNDARY] * (k - 1) + conditioning + target_tokens
        start = (k - 1) + len(conditioning)
        alpha = self.smoothing
        denom_base = alpha * self.vocab_size
        row = np.empty(len(target_tokens), dtype=np.float64)
        for j in range(len(target_tokens)):
            pos = start + j
            hist = tuple(stream[pos - k + 1 : pos])
            gram = hist + (stream[pos],)
            num = self._grams[gram] + (gram in dyn_grams) + alpha
            den = self._hists[hist] + (hist in dyn_hists) + denom_base
            row[j] = math.log(num / den)
        if k >= 2:
            visible = conditioning + target_tokens
        else:
            visible = target_tokens
        return row, " ".join(visible)

    def score(self, request: ScoreRequest) -> ScoreResponse:
        target_tokens = request.target_text.split()
        context_tokens = request.context_text.split()
        passages = request.passages if request.passages else ("",)
        rows = np.empty((len(passages), len(target_tokens)), dtype=np.float64)
        embeddings = None
        if request.want_embedding:
            embeddings = np.empty((len(passages), self._embedder.dim), dtype=np.float64)
        for i, passage in enumerate(passages):
            row, visible = self._row(passage, context_tokens, target_tokens)
            rows[i] = row
            if embeddings is not None:
                embeddings[i] = self._embedder.embed(visible)
        return ScoreResponse(
            logprobs=rows,
            target_token_count=len(target_tokens),
            embeddings=embeddings,
            fingerprint=self.fingerprint,
        )


class UniformScorer:
    """Assigns every target token probability 1/V; context-insensitive."""

    def __init__(self, vocab_size: int = 16, dim: int = 8):
        if vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        self.vocab_size = vocab_size
        self.dim = dim
        self.fingerprint = f"uniform:v={vocab_size}"
        self._unit = np.zeros(dim, dtype=np.float64)
        self._unit[0] = 1.0

    def embed_text(self, text: str) -> np.ndarray:
        return self._unit.copy()

    def score(self, request: ScoreRequest) -> ScoreResponse:
        rows = max(1, len(request.passages))
        count = len(request.target_text.split())
        logprobs = np.full((rows, count), -math.log(self.vocab_size), dtype=np.float64)
        embeddings = None
        if request.want_embedding:
            embeddings = np.tile(self._unit, (rows, 1))
        return ScoreResponse(
            logprobs=logprobs,
            target_token_count=count,
            embeddings=embeddings,
            fingerprint=self.fingerprint,
        )
