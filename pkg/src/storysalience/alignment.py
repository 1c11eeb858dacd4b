"""Silver salience labels from aligning summary sentences to full text.

Each summary sentence is anchored proportionally into the full text and
compared, by embedding cosine similarity, against the sentences inside a
positional window around the anchor. The best matches above an absolute and
a drop-from-max threshold become silver-salient sentences.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

from .embeddings import HashedBowEmbedder, cosine_similarity

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlignmentConfig:
    window_fraction: float = 0.10
    min_similarity: float = 0.35
    max_drop: float = 0.05
    max_targets: int = 3

    def __post_init__(self):
        if not 0.0 < self.window_fraction <= 1.0:
            raise ValueError("window_fraction must be in (0, 1]")
        if not 0.0 < self.min_similarity < 1.0:
            raise ValueError("min_similarity must be in (0, 1)")
        if not 0.0 <= self.max_drop < 1.0:
            raise ValueError("max_drop must be in [0, 1)")
        if self.max_targets < 1:
            raise ValueError("max_targets must be >= 1")


@dataclass(frozen=True)
class SummaryAlignment:
    summary_index: int
    targets: tuple[tuple[int, float], ...]  # (full_text_index, similarity)


@dataclass(frozen=True)
class LabeledSentence:
    index: int
    text: str
    salient: bool
    salience_score: float


@dataclass(frozen=True)
class SilverLabelSet:
    chapter_id: str
    sentences: tuple[LabeledSentence, ...]
    alignments: tuple[SummaryAlignment, ...]
    summary: tuple[str, ...]

    def labels(self) -> list[bool]:
        return [s.salient for s in self.sentences]

    def texts(self) -> list[str]:
        return [s.text for s in self.sentences]


@dataclass
class CorpusStats:
    chapters: int = 0
    total_sentences: int = 0
    total_salient: int = 0
    skipped: list[str] = field(default_factory=list)

    @property
    def mean_sentences_per_chapter(self) -> float:
        return self.total_sentences / self.chapters if self.chapters else 0.0

    @property
    def mean_salient_per_chapter(self) -> float:
        return self.total_salient / self.chapters if self.chapters else 0.0

    def to_dict(self) -> dict:
        return {
            "chapters": self.chapters,
            "total_sentences": self.total_sentences,
            "total_salient": self.total_salient,
            "mean_sentences_per_chapter": self.mean_sentences_per_chapter,
            "mean_salient_per_chapter": self.mean_salient_per_chapter,
            "skipped": list(self.skipped),
        }


def candidate_window(i: int, summary_len: int, full_len: int, fraction: float) -> tuple[int, int]:
    """Inclusive full-text index bounds around the proportional anchor of i."""
    anchor = min(full_len - 1, round(i / summary_len * full_len))
    width = math.ceil(fraction * full_len)
    return max(0, anchor - width), min(full_len - 1, anchor + width)


def align_chapter(
    summary: list[str],
    full_text: list[str],
    embedder=None,
    config: AlignmentConfig = AlignmentConfig(),
    chapter_id: str = "",
) -> SilverLabelSet:
    """Label full-text sentences that align with summary sentences.

    For each summary sentence: candidates are the full-text sentences inside
    the proportional window; keep up to ``max_targets`` of them with
    similarity >= ``min_similarity`` and >= window max - ``max_drop``, best
    first, ties to the lower index. A sentence matched by several summary
    sentences keeps its highest similarity as the salience score.
    """
    if not summary or not full_text:
        raise ValueError("summary and full_text must be non-empty")
    embedder = embedder or HashedBowEmbedder(dim=768, sublinear=True)
    summary_vecs = embedder.embed_batch(list(summary))
    full_vecs = embedder.embed_batch(list(full_text))

    best_score = [0.0] * len(full_text)
    matched = [False] * len(full_text)
    alignments = []
    for i in range(len(summary)):
        lo, hi = candidate_window(i, len(summary), len(full_text), config.window_fraction)
        sims = [
            (j, cosine_similarity(summary_vecs[i], full_vecs[j])) for j in range(lo, hi + 1)
        ]
        window_max = max(s for _, s in sims)
        floor = max(config.min_similarity, window_max - config.max_drop)
        eligible = [(j, s) for j, s in sims if s >= floor]
        eligible.sort(key=lambda pair: (-pair[1], pair[0]))
        targets = tuple(eligible[: config.max_targets])
        alignments.append(SummaryAlignment(summary_index=i, targets=targets))
        for j, s in targets:
            matched[j] = True
            best_score[j] = max(best_score[j], s)

    sentences = tuple(
        LabeledSentence(index=j, text=full_text[j], salient=matched[j], salience_score=best_score[j])
        for j in range(len(full_text))
    )
    return SilverLabelSet(
        chapter_id=chapter_id,
        sentences=sentences,
        alignments=tuple(alignments),
        summary=tuple(summary),
    )


def label_corpus(
    pairs: Iterable[dict],
    embedder=None,
    config: AlignmentConfig = AlignmentConfig(),
) -> tuple[list[SilverLabelSet], CorpusStats]:
    """Align every (summary, full text) chapter pair; skip incomplete ones.

    Each pair is a mapping with ``chapter_id``, ``summary_sentences`` and
    ``full_text_sentences``.
    """
    stats = CorpusStats()
    label_sets = []
    for pair in pairs:
        chapter_id = pair.get("chapter_id", f"chapter-{stats.chapters}")
        summary = pair.get("summary_sentences") or []
        full_text = pair.get("full_text_sentences") or []
        if not summary or not full_text:
            logger.warning("skipping chapter '%s': missing summary or full text", chapter_id)
            stats.skipped.append(chapter_id)
            continue
        labels = align_chapter(summary, full_text, embedder, config, chapter_id=chapter_id)
        label_sets.append(labels)
        stats.chapters += 1
        stats.total_sentences += len(labels.sentences)
        stats.total_salient += sum(1 for s in labels.sentences if s.salient)
    return label_sets, stats


# ---------------------------------------------------------------------------
# Serialization (chapters -> summary alignments + labeled full text)

def label_sets_to_document(label_sets: list[SilverLabelSet]) -> dict:
    chapters = []
    for ls in label_sets:
        chapters.append(
            {
                "chapter_id": ls.chapter_id,
                "summary": [
                    {
                        "text": ls.summary[a.summary_index],
                        "alignments": [
                            {"index": j, "text": ls.sentences[j].text, "score": s}
                            for j, s in a.targets
                        ],
                    }
                    for a in ls.alignments
                ],
                "full_text": [
                    {
                        "index": s.index,
                        "text": s.text,
                        "salient": s.salient,
                        "salience_score": s.salience_score,
                    }
                    for s in ls.sentences
                ],
            }
        )
    return {"chapters": chapters}


def label_sets_from_document(document: dict) -> list[SilverLabelSet]:
    out = []
    for chapter in document["chapters"]:
        sentences = tuple(
            LabeledSentence(
                index=item["index"],
                text=item["text"],
                salient=bool(item["salient"]),
                salience_score=float(item["salience_score"]),
            )
            for item in chapter["full_text"]
        )
        alignments = tuple(
            SummaryAlignment(
                summary_index=i,
                targets=tuple((a["index"], float(a["score"])) for a in entry["alignments"]),
            )
            for i, entry in enumerate(chapter.get("summary", []))
        )
        summary = tuple(entry["text"] for entry in chapter.get("summary", []))
        out.append(
            SilverLabelSet(
                chapter_id=chapter["chapter_id"],
                sentences=sentences,
                alignments=alignments,
                summary=summary,
            )
        )
    return out
