"""Per-sentence salience measures over a chapter.

Every likelihood measure derives from block coherence: a sentence scores by
how much manipulating it (deleting, swapping with its successor, or removing
retrieval) changes the model's ability to predict the following text.
Chapters are processed in one causal pass per chapter: retrieval, scoring,
then memory insertion of the block target, in ascending block order.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, replace
from statistics import fmean, pstdev
from typing import Callable, Iterator

import numpy as np

from .baselines import ClusterConfig, PositionalKind, cluster_salience, positional_baseline
from .corpus import Chapter, Sentence, WindowSpec, make_blocks, truncate_context
from .embeddings import cosine_distance
from .errors import ShapeError
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
from .scoring import CoherenceResult, Scorer, coherence
from .sentiment import LexiconSentiment


class MeasureId(enum.Enum):
    CLUS_SAL = "Clus-Sal"
    LIKE_SAL = "Like-Sal"
    NO_KNOW_SAL = "No-Know-Sal"
    LIKE_IMP_SAL = "Like-Imp-Sal"
    LIKE_CLUS_SAL = "Like-Clus-Sal"
    LIKE_CLUS_IMP_SAL = "Like-Clus-Imp-Sal"
    KNOW_SAL = "Know-Sal"
    SWAP_SAL = "Swap-Sal"
    EMB_SURP = "Emb-Surp"
    EMB_SAL = "Emb-Sal"
    RANDOM = "Random"
    ASCENDING = "Ascending"
    DESCENDING = "Descending"


#: Serialized alias for the knowledge measure; reads and writes both names.
KNOW_SAL_ALIAS = "Know-Diff-Sal"

ALL_MEASURES = frozenset(MeasureId)

_LIKE_FAMILY = {
    MeasureId.LIKE_SAL,
    MeasureId.LIKE_IMP_SAL,
    MeasureId.LIKE_CLUS_SAL,
    MeasureId.LIKE_CLUS_IMP_SAL,
}
_CLUS_FAMILY = {MeasureId.CLUS_SAL, MeasureId.LIKE_CLUS_SAL, MeasureId.LIKE_CLUS_IMP_SAL}
_BLOCK_MEASURES = _LIKE_FAMILY | {
    MeasureId.NO_KNOW_SAL,
    MeasureId.KNOW_SAL,
    MeasureId.SWAP_SAL,
    MeasureId.EMB_SURP,
    MeasureId.EMB_SAL,
}


def parse_measures(names: list[str]) -> set[MeasureId]:
    by_value = {m.value: m for m in MeasureId}
    by_value[KNOW_SAL_ALIAS] = MeasureId.KNOW_SAL
    out = set()
    for name in names:
        if name not in by_value:
            known = ", ".join(sorted(by_value))
            raise ValueError(f"unknown measure '{name}' (known: {known})")
        out.add(by_value[name])
    return out


@dataclass(frozen=True)
class SalienceSettings:
    """Retrieval and window configuration for one salience run."""

    window: WindowSpec = WindowSpec()
    mode: RetrievalMode = RetrievalMode.KB_AND_MEM
    k: int = 20
    memory_policy: str = "lru"
    memory_capacity: int = 131072
    cluster: ClusterConfig = ClusterConfig()
    clus_polarity: str = "similarity"

    def new_cache(self) -> MemoryCache:
        return MemoryCache(capacity=self.memory_capacity, policy=self.memory_policy)


@dataclass(frozen=True)
class SalienceProfile:
    story_id: str
    chapter_id: str
    scores: dict[MeasureId, list[float]]
    scorer_fingerprint: str
    config_hash: str


def derive_seed(root: int, *labels: str) -> int:
    """Counter-free deterministic seed split: hash the root with its labels."""
    payload = f"{root}|" + "|".join(labels)
    return int.from_bytes(hashlib.sha256(payload.encode("utf-8")).digest()[:8], "little")


# ---------------------------------------------------------------------------
# Causal pass

@dataclass
class BlockEvaluation:
    t: int
    block_id: int
    retrieved: RetrievedSet
    intact: CoherenceResult | None = None
    deleted: CoherenceResult | None = None
    swapped: CoherenceResult | None = None
    off_intact: CoherenceResult | None = None
    off_deleted: CoherenceResult | None = None


def _retrieval_rng(seed: int, chapter_id: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, "retrieval", chapter_id))


def _causal_pass(
    chapter: Chapter,
    scorer: Scorer,
    settings: SalienceSettings,
    kb: KnowledgeBase | None,
    cache: MemoryCache | None,
    seed: int,
    needs: frozenset[str],
    want_embedding: bool,
    block_offset: int = 0,
    score_from: int = 0,
    score_to: int | None = None,
    dump_sink: Callable[[dict], None] | None = None,
) -> Iterator[BlockEvaluation]:
    """Walk a chapter's blocks in order: retrieve, score variants, insert target.

    Blocks outside [score_from, score_to] still perform retrieval and memory
    insertion (preserving rng state and LRU recency) but skip scoring, which
    lets single-sentence operations replay to any position deterministically.
    """
    blocks = make_blocks(chapter, settings.window, block_offset=block_offset)
    rng = _retrieval_rng(seed, chapter.chapter_id)
    for block in blocks:
        t = block.block_id - block_offset
        if score_to is not None and t > score_to:
            return
        retrieved = EMPTY_RETRIEVAL
        if settings.mode is not RetrievalMode.OFF:
            query = scorer.embed_text(block.context_text)
            retrieved = retrieve(query, kb, cache, settings.k, settings.mode, rng)
        evaluation = BlockEvaluation(t=t, block_id=block.block_id, retrieved=retrieved)
        if t >= score_from:
            evaluation.intact = coherence(block, retrieved, scorer, want_embedding)
            if "deleted" in needs or "off_deleted" in needs:
                deleted_block = replace(block, context=block.context[:-1])
            if "deleted" in needs:
                evaluation.deleted = coherence(deleted_block, retrieved, scorer, want_embedding)
            if "swapped" in needs:
                successor = chapter.sentences[t + 1]
                swapped_ctx = truncate_context(
                    (*block.context[:-1], successor), settings.window
                )
                swapped_block = replace(block, context=swapped_ctx)
                evaluation.swapped = coherence(swapped_block, retrieved, scorer, want_embedding)
            if "off_intact" in needs:
                evaluation.off_intact = coherence(block, EMPTY_RETRIEVAL, scorer, want_embedding)
            if "off_deleted" in needs:
                evaluation.off_deleted = coherence(
                    deleted_block, EMPTY_RETRIEVAL, scorer, want_embedding
                )
            if dump_sink is not None:
                dump_sink(
                    {
                        "block_id": block.block_id,
                        "retrieved": [
                            {
                                "passage_id": item.record.passage_id,
                                "source": item.record.source.value,
                                "memory_id": item.record.memory_id,
                                "score": item.score,
                                "weight": item.weight,
                            }
                            for item in retrieved.items
                        ],
                    }
                )
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
        yield evaluation


def _replay_cache(
    settings: SalienceSettings, cache: MemoryCache | None
) -> MemoryCache | None:
    """Standalone operations never mutate a caller's cache."""
    if cache is not None:
        return cache.clone()
    if settings.mode is RetrievalMode.OFF:
        return None
    return settings.new_cache()


def _single_block(
    chapter: Chapter,
    t: int,
    scorer: Scorer,
    settings: SalienceSettings,
    kb: KnowledgeBase | None,
    cache: MemoryCache | None,
    seed: int,
    needs: frozenset[str],
    want_embedding: bool = False,
) -> BlockEvaluation | None:
    if t < 0 or t >= len(chapter.sentences):
        raise IndexError(f"sentence index {t} out of range")
    if t >= len(chapter.sentences) - 1:
        return None
    replayed = _replay_cache(settings, cache)
    for evaluation in _causal_pass(
        chapter, scorer, settings, kb, replayed, seed, needs, want_embedding,
        score_from=t, score_to=t,
    ):
        if evaluation.t == t:
            return evaluation
    return None


# ---------------------------------------------------------------------------
# Single-measure operations

def deletion_salience(
    chapter: Chapter,
    t: int,
    scorer: Scorer,
    settings: SalienceSettings = SalienceSettings(),
    kb: KnowledgeBase | None = None,
    cache: MemoryCache | None = None,
    seed: int = 0,
) -> float:
    """Coherence drop from deleting sentence t; 0 for the final sentence.

    Both variants share the passages retrieved against the intact context.
    """
    evaluation = _single_block(
        chapter, t, scorer, settings, kb, cache, seed, frozenset({"deleted"})
    )
    if evaluation is None:
        return 0.0
    return evaluation.intact.avg_log_likelihood - evaluation.deleted.avg_log_likelihood


def swap_salience(
    chapter: Chapter,
    t: int,
    scorer: Scorer,
    settings: SalienceSettings = SalienceSettings(),
    kb: KnowledgeBase | None = None,
    cache: MemoryCache | None = None,
    seed: int = 0,
) -> float:
    """Coherence drop when sentence t is replaced by its successor in context."""
    evaluation = _single_block(
        chapter, t, scorer, settings, kb, cache, seed, frozenset({"swapped"})
    )
    if evaluation is None:
        return 0.0
    return evaluation.intact.avg_log_likelihood - evaluation.swapped.avg_log_likelihood


def knowledge_salience(
    chapter: Chapter,
    t: int,
    scorer: Scorer,
    kb: KnowledgeBase | None = None,
    cache: MemoryCache | None = None,
    settings: SalienceSettings = SalienceSettings(),
    seed: int = 0,
) -> float:
    """Coherence with retrieval enabled minus with it disabled, intact block."""
    evaluation = _single_block(
        chapter, t, scorer, settings, kb, cache, seed, frozenset({"off_intact"})
    )
    if evaluation is None:
        return 0.0
    return evaluation.intact.avg_log_likelihood - evaluation.off_intact.avg_log_likelihood


def embedding_salience(
    chapter: Chapter,
    t: int,
    scorer: Scorer,
    settings: SalienceSettings = SalienceSettings(),
    kb: KnowledgeBase | None = None,
    cache: MemoryCache | None = None,
    seed: int = 0,
) -> float:
    """Cosine distance between pooled embeddings of intact and deleted context."""
    evaluation = _single_block(
        chapter, t, scorer, settings, kb, cache, seed, frozenset({"deleted"}),
        want_embedding=True,
    )
    if evaluation is None:
        return 0.0
    return cosine_distance(
        evaluation.intact.pooled_embedding, evaluation.deleted.pooled_embedding
    )


def ely_surprise(
    chapter: Chapter,
    scorer: Scorer,
    settings: SalienceSettings = SalienceSettings(),
    kb: KnowledgeBase | None = None,
    cache: MemoryCache | None = None,
    seed: int = 0,
) -> list[float]:
    """Cosine distance between consecutive pooled block embeddings.

    Element 0 is 0 (no predecessor); sentences with no block score 0.
    """
    n = len(chapter.sentences)
    scores = [0.0] * n
    replayed = _replay_cache(settings, cache)
    previous = None
    for evaluation in _causal_pass(
        chapter, scorer, settings, kb, replayed, seed, frozenset(), want_embedding=True
    ):
        pooled = evaluation.intact.pooled_embedding
        if previous is not None and evaluation.t >= 1:
            scores[evaluation.t] = cosine_distance(pooled, previous)
        previous = pooled
    return scores


def sentiment_adjust(
    scores: list[float], sentences: list[Sentence], provider=None
) -> list[float]:
    """Elementwise score * (1 + |sentiment|); never shrinks or flips a score."""
    if len(scores) != len(sentences):
        raise ShapeError(f"{len(scores)} scores for {len(sentences)} sentences")
    provider = provider or LexiconSentiment()
    return [
        score * (1.0 + abs(provider.score(sentence.text)))
        for score, sentence in zip(scores, sentences)
    ]


def _znorm(values: list[float]) -> list[float]:
    sd = pstdev(values) if len(values) > 1 else 0.0
    if sd == 0.0:
        return [0.0] * len(values)
    mean = fmean(values)
    return [(v - mean) / sd for v in values]


def combine_like_clus(like: list[float], clus: list[float]) -> list[float]:
    """Per-chapter z-normalized weighted sum: clus_z + 2 * like_z."""
    if len(like) != len(clus):
        raise ShapeError(f"length mismatch {len(like)} vs {len(clus)}")
    like_z = _znorm(like)
    clus_z = _znorm(clus)
    return [c + 2.0 * l for l, c in zip(like_z, clus_z)]


# ---------------------------------------------------------------------------
# Full-chapter profiling

def _needs_for(measures: set[MeasureId]) -> frozenset[str]:
    needs = set()
    if measures & (_LIKE_FAMILY | {MeasureId.EMB_SAL}):
        needs.add("deleted")
    if MeasureId.SWAP_SAL in measures:
        needs.add("swapped")
    if measures & {MeasureId.KNOW_SAL, MeasureId.NO_KNOW_SAL}:
        needs.add("off_intact")
    if MeasureId.NO_KNOW_SAL in measures:
        needs.add("off_deleted")
    return frozenset(needs)


def profile_chapter(
    chapter: Chapter,
    measures: set[MeasureId],
    scorer: Scorer,
    kb: KnowledgeBase | None = None,
    cache: MemoryCache | None = None,
    seed: int = 0,
    settings: SalienceSettings = SalienceSettings(),
    story_id: str = "",
    config_hash: str = "",
    sentiment_provider=None,
    block_offset: int = 0,
    dump_sink: Callable[[dict], None] | None = None,
) -> SalienceProfile:
    """Score every requested measure for every sentence in one causal pass.

    The supplied cache is mutated in place (chapters of one story share it);
    pass None to disable memory entirely.
    """
    n = len(chapter.sentences)
    if n < 2:
        raise ValueError(f"chapter '{chapter.chapter_id}' needs >= 2 sentences")
    needs = _needs_for(measures)
    want_embedding = bool(measures & {MeasureId.EMB_SAL, MeasureId.EMB_SURP})

    like = [0.0] * n
    no_know = [0.0] * n
    know = [0.0] * n
    swap = [0.0] * n
    emb_sal = [0.0] * n
    emb_surp = [0.0] * n
    previous_pooled = None
    if measures & _BLOCK_MEASURES:
        for ev in _causal_pass(
            chapter, scorer, settings, kb, cache, seed, needs, want_embedding,
            block_offset=block_offset, dump_sink=dump_sink,
        ):
            t = ev.t
            if ev.deleted is not None:
                like[t] = ev.intact.avg_log_likelihood - ev.deleted.avg_log_likelihood
                if want_embedding:
                    emb_sal[t] = cosine_distance(
                        ev.intact.pooled_embedding, ev.deleted.pooled_embedding
                    )
            if ev.swapped is not None:
                swap[t] = ev.intact.avg_log_likelihood - ev.swapped.avg_log_likelihood
            if ev.off_intact is not None:
                know[t] = ev.intact.avg_log_likelihood - ev.off_intact.avg_log_likelihood
            if ev.off_deleted is not None:
                no_know[t] = (
                    ev.off_intact.avg_log_likelihood - ev.off_deleted.avg_log_likelihood
                )
            if want_embedding:
                if previous_pooled is not None and t >= 1:
                    emb_surp[t] = cosine_distance(ev.intact.pooled_embedding, previous_pooled)
                previous_pooled = ev.intact.pooled_embedding

    clus = None
    if measures & _CLUS_FAMILY:
        embeddings = np.stack([scorer.embed_text(s.text) for s in chapter.sentences])
        cluster_config = replace(
            settings.cluster, seed=derive_seed(seed, "cluster", chapter.chapter_id)
        )
        clus = cluster_salience(embeddings, cluster_config, polarity=settings.clus_polarity)

    scores: dict[MeasureId, list[float]] = {}
    sentences = list(chapter.sentences)
    for measure in measures:
        if measure is MeasureId.LIKE_SAL:
            scores[measure] = list(like)
        elif measure is MeasureId.NO_KNOW_SAL:
            scores[measure] = list(no_know)
        elif measure is MeasureId.KNOW_SAL:
            scores[measure] = list(know)
        elif measure is MeasureId.SWAP_SAL:
            scores[measure] = list(swap)
        elif measure is MeasureId.EMB_SAL:
            scores[measure] = list(emb_sal)
        elif measure is MeasureId.EMB_SURP:
            scores[measure] = list(emb_surp)
        elif measure is MeasureId.CLUS_SAL:
            scores[measure] = list(clus)
        elif measure is MeasureId.LIKE_IMP_SAL:
            scores[measure] = sentiment_adjust(like, sentences, sentiment_provider)
        elif measure is MeasureId.LIKE_CLUS_SAL:
            scores[measure] = combine_like_clus(like, clus)
        elif measure is MeasureId.LIKE_CLUS_IMP_SAL:
            scores[measure] = sentiment_adjust(
                combine_like_clus(like, clus), sentences, sentiment_provider
            )
        elif measure is MeasureId.RANDOM:
            scores[measure] = positional_baseline(
                n, PositionalKind.RANDOM, seed=derive_seed(seed, "random", chapter.chapter_id)
            )
        elif measure is MeasureId.ASCENDING:
            scores[measure] = positional_baseline(n, PositionalKind.ASCENDING)
        elif measure is MeasureId.DESCENDING:
            scores[measure] = positional_baseline(n, PositionalKind.DESCENDING)
    return SalienceProfile(
        story_id=story_id,
        chapter_id=chapter.chapter_id,
        scores=scores,
        scorer_fingerprint=scorer.fingerprint,
        config_hash=config_hash,
    )


# ---------------------------------------------------------------------------
# Serialization

def profile_to_record(profile: SalienceProfile) -> dict:
    serialized = {m.value: list(v) for m, v in sorted(profile.scores.items(), key=lambda kv: kv[0].value)}
    if MeasureId.KNOW_SAL in profile.scores:
        serialized[KNOW_SAL_ALIAS] = list(profile.scores[MeasureId.KNOW_SAL])
    return {
        "story_id": profile.story_id,
        "chapter_id": profile.chapter_id,
        "scores": serialized,
        "fingerprint": profile.scorer_fingerprint,
        "config_hash": profile.config_hash,
    }


def profile_from_record(record: dict) -> SalienceProfile:
    by_value = {m.value: m for m in MeasureId}
    scores: dict[MeasureId, list[float]] = {}
    for name, values in record["scores"].items():
        if name == KNOW_SAL_ALIAS:
            scores.setdefault(MeasureId.KNOW_SAL, [float(v) for v in values])
        elif name in by_value:
            scores[by_value[name]] = [float(v) for v in values]
    return SalienceProfile(
        story_id=record.get("story_id", ""),
        chapter_id=record["chapter_id"],
        scores=scores,
        scorer_fingerprint=record.get("fingerprint", ""),
        config_hash=record.get("config_hash", ""),
    )
