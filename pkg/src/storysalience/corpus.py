"""Story ingestion, sentence splitting, and sliding context/target windows.

Everything here is a pure function over immutable values; chapters can be
processed concurrently without coordination.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable

from .errors import EmptyStoryError

Tokenizer = Callable[[str], int]


def count_tokens(text: str) -> int:
    """Reference token count: whitespace tokens. 0 iff the text is blank."""
    return len(text.split())


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str
    token_count: int

    @staticmethod
    def make(index: int, text: str, tokenizer: Tokenizer = count_tokens) -> "Sentence":
        return Sentence(index=index, text=text, token_count=tokenizer(text))


@dataclass(frozen=True)
class Chapter:
    chapter_id: str
    title: str
    sentences: tuple[Sentence, ...]

    def texts(self) -> list[str]:
        return [s.text for s in self.sentences]


@dataclass(frozen=True)
class Story:
    story_id: str
    title: str
    chapters: tuple[Chapter, ...]


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window sizes: sentence span and token budgets for each block."""

    context_sentences: int = 12
    context_token_budget: int = 512
    target_token_budget: int = 128

    def __post_init__(self):
        for name in ("context_sentences", "context_token_budget", "target_token_budget"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class Block:
    """One prediction step: context sentences up to t, target text after t."""

    block_id: int
    context: tuple[Sentence, ...]
    target: tuple[Sentence, ...]

    @property
    def context_text(self) -> str:
        return " ".join(s.text for s in self.context)

    @property
    def target_text(self) -> str:
        return " ".join(s.text for s in self.target)


# ---------------------------------------------------------------------------
# Sentence splitting

_ABBREVIATIONS = {
    "mr", "mrs", "ms", "dr", "prof", "rev", "hon", "st", "mt", "capt",
    "col", "gen", "lt", "sgt", "maj", "sr", "jr", "vs", "etc", "no",
    "vol", "ch", "fig", "inc", "ltd", "co", "ed", "pp", "e.g", "i.e", "al",
}

_BREAK = re.compile(r"[.!?]+[\"'”’)\]]*\s+")
_OPENER = re.compile(r"[\"'“‘(\[]*[A-Z0-9]")


def _is_abbreviation(prefix: str) -> bool:
    """True when the token ending at a candidate break should not end a sentence."""
    word = prefix.rstrip(".").split()[-1] if prefix.rstrip(".").split() else ""
    word = word.lstrip("\"'“‘([")
    if not word:
        return False
    if len(word) == 1 and word.isupper():
        return True
    return word.lower().rstrip(".") in _ABBREVIATIONS


def split_sentences(text: str) -> list[str]:
    """Deterministic rule-based sentence splitter.

    Breaks on terminal punctuation followed by whitespace and an upper-case
    or quoted opener, guarded by an abbreviation/initial list. All
    non-whitespace characters of the input are preserved in the output.
    """
    normalized = " ".join(text.split())
    if not normalized:
        return []
    sentences = []
    start = 0
    for match in _BREAK.finditer(normalized):
        prefix = normalized[start:match.end()].rstrip()
        if _is_abbreviation(prefix):
            continue
        if not _OPENER.match(normalized, match.end()):
            continue
        sentences.append(normalized[start:match.end()].strip())
        start = match.end()
    tail = normalized[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences

Splitter = Callable[[str], list[str]]


# ---------------------------------------------------------------------------
# Ingestion

def _chapter_from_text(
    story_id: str,
    ordinal: int,
    text: str,
    splitter: Splitter,
    tokenizer: Tokenizer,
) -> Chapter | None:
    parts = splitter(text)
    if not parts:
        return None
    sentences = tuple(Sentence.make(i, t, tokenizer) for i, t in enumerate(parts))
    return Chapter(chapter_id=f"{story_id}:ch{ordinal:04d}", title="", sentences=sentences)


def ingest(
    raw_text: str,
    story_id: str,
    chapter_breaks: list[int] | None = None,
    splitter: Splitter = split_sentences,
    tokenizer: Tokenizer = count_tokens,
) -> Story:
    """Split raw text into a Story of chapters and sentences.

    ``chapter_breaks`` are byte offsets into the UTF-8 encoding of
    ``raw_text``; each offset starts a new chapter. Chapters that contain no
    sentences are dropped.
    """
    if chapter_breaks:
        data = raw_text.encode("utf-8")
        offsets = sorted(set(b for b in chapter_breaks if 0 < b < len(data)))
        bounds = [0, *offsets, len(data)]
        pieces = [data[a:b].decode("utf-8") for a, b in zip(bounds, bounds[1:])]
    else:
        pieces = [raw_text]
    chapters = []
    for i, piece in enumerate(pieces):
        chapter = _chapter_from_text(story_id, i, piece, splitter, tokenizer)
        if chapter is not None:
            chapters.append(chapter)
    if not chapters:
        raise EmptyStoryError(f"story '{story_id}' has no sentences")
    return Story(story_id=story_id, title=story_id, chapters=tuple(chapters))


# ---------------------------------------------------------------------------
# Blocks

def _truncate_tokens_oldest_first(
    sentences: Iterable[Sentence], budget: int, tokenizer: Tokenizer = count_tokens
) -> tuple[Sentence, ...]:
    """Enforce a token budget by dropping leading tokens of the oldest sentences."""
    kept = list(sentences)
    total = sum(s.token_count for s in kept)
    overflow = total - budget
    while overflow > 0 and kept:
        oldest = kept[0]
        if oldest.token_count <= overflow:
            overflow -= oldest.token_count
            kept.pop(0)
            continue
        words = oldest.text.split()
        trimmed = " ".join(words[overflow:])
        kept[0] = replace(oldest, text=trimmed, token_count=tokenizer(trimmed))
        overflow = 0
    return tuple(kept)


def _take_target(
    sentences: list[Sentence], budget: int, tokenizer: Tokenizer = count_tokens
) -> tuple[Sentence, ...]:
    taken: list[Sentence] = []
    remaining = budget
    for sentence in sentences:
        if remaining <= 0:
            break
        if sentence.token_count <= remaining:
            taken.append(sentence)
            remaining -= sentence.token_count
            continue
        words = sentence.text.split()
        clipped = " ".join(words[:remaining])
        taken.append(replace(sentence, text=clipped, token_count=tokenizer(clipped)))
        break
    return tuple(taken)


def make_blocks(
    chapter: Chapter,
    spec: WindowSpec,
    tokenizer: Tokenizer = count_tokens,
    block_offset: int = 0,
) -> list[Block]:
    """One block per sentence position that still has following text.

    The context is the causal window ending at t; the target is the text
    after t clipped to the target token budget (the final target sentence
    may be token-truncated). A context over budget loses tokens from its
    oldest sentence first.
    """
    sentences = chapter.sentences
    blocks = []
    for t in range(len(sentences) - 1):
        context = sentences[max(0, t - spec.context_sentences + 1): t + 1]
        context = _truncate_tokens_oldest_first(context, spec.context_token_budget, tokenizer)
        target = _take_target(list(sentences[t + 1:]), spec.target_token_budget, tokenizer)
        blocks.append(Block(block_id=block_offset + t, context=context, target=target))
    return blocks


def truncate_context(
    sentences: Iterable[Sentence], spec: WindowSpec, tokenizer: Tokenizer = count_tokens
) -> tuple[Sentence, ...]:
    """Re-apply the context token budget to a manipulated sentence list."""
    return _truncate_tokens_oldest_first(sentences, spec.context_token_budget, tokenizer)


# ---------------------------------------------------------------------------
# JSONL serialization: one chapter per line

def chapter_to_record(story: Story, chapter: Chapter) -> dict:
    return {
        "story_id": story.story_id,
        "chapter_id": chapter.chapter_id,
        "title": chapter.title,
        "sentences": [{"index": s.index, "text": s.text} for s in chapter.sentences],
    }


def write_stories_jsonl(stories: Iterable[Story], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for story in stories:
            for chapter in story.chapters:
                fh.write(json.dumps(chapter_to_record(story, chapter), sort_keys=True))
                fh.write("\n")


def load_stories_jsonl(path: str | Path, tokenizer: Tokenizer = count_tokens) -> list[Story]:
    """Load stories from chapter-per-line JSONL, preserving first-seen order.

    Sentences are re-indexed by their position in the record, and token
    counts are recomputed with the supplied tokenizer.
    """
    grouped: dict[str, list[Chapter]] = {}
    titles: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            sentences = tuple(
                Sentence.make(i, item["text"], tokenizer)
                for i, item in enumerate(rec["sentences"])
            )
            if not sentences:
                raise EmptyStoryError(f"line {line_no}: chapter without sentences")
            chapter = Chapter(
                chapter_id=rec["chapter_id"], title=rec.get("title", ""), sentences=sentences
            )
            story_id = rec["story_id"]
            bucket = grouped.setdefault(story_id, [])
            if any(c.chapter_id == chapter.chapter_id for c in bucket):
                raise ValueError(
                    f"duplicate chapter id '{chapter.chapter_id}' in story '{story_id}'"
                )
            bucket.append(chapter)
            titles.setdefault(story_id, rec.get("title", "") or story_id)
    return [
        Story(story_id=sid, title=titles[sid], chapters=tuple(chapters))
        for sid, chapters in grouped.items()
    ]
