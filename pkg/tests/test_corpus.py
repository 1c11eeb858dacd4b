"""Ingestion, sentence splitting, and block windowing."""
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from storysalience.corpus import (
    Chapter,
    Sentence,
    WindowSpec,
    count_tokens,
    ingest,
    load_stories_jsonl,
    make_blocks,
    split_sentences,
    write_stories_jsonl,
)
from storysalience.errors import EmptyStoryError


def make_chapter(texts, chapter_id="ch0"):
    return Chapter(
        chapter_id=chapter_id,
        title="",
        sentences=tuple(Sentence.make(i, t) for i, t in enumerate(texts)),
    )


def uniform_chapter(n, tokens_per_sentence=5):
    texts = [" ".join(f"w{i}x{j}" for j in range(tokens_per_sentence)) for i in range(n)]
    return make_chapter(texts)


class TestSplitSentences:
    def test_initials_do_not_break(self):
        assert split_sentences("A. B. went home. She slept.") == [
            "A. B. went home.",
            "She slept.",
        ]

    def test_abbreviations(self):
        assert split_sentences("He met Mr. Kim. Dr. Cho waved.") == [
            "He met Mr. Kim.",
            "Dr. Cho waved.",
        ]

    def test_single_sentence(self):
        assert split_sentences("Hello.") == ["Hello."]

    def test_empty(self):
        assert split_sentences("") == []
        assert split_sentences("   \n\t ") == []

    def test_question_and_exclamation(self):
        assert split_sentences("Who goes there? Stop! Answer me.") == [
            "Who goes there?",
            "Stop!",
            "Answer me.",
        ]

    def test_quoted_break(self):
        text = '"Keep still!" He froze.'
        assert split_sentences(text) == ['"Keep still!"', "He froze."]

    def test_preserves_non_whitespace(self):
        text = "It rained.  The road, dark and long, wound on. Then dawn."
        joined = " ".join(split_sentences(text))
        assert joined.split() == text.split()


class TestIngest:
    def test_single_sentence_story(self):
        story = ingest("Hello.", "s1")
        assert len(story.chapters) == 1
        assert story.chapters[0].sentences[0].index == 0
        assert story.chapters[0].sentences[0].text == "Hello."

    def test_empty_raises(self):
        with pytest.raises(EmptyStoryError):
            ingest("", "s1")

    def test_deterministic(self):
        text = "One thing happened. Then another. Finally the end came."
        assert ingest(text, "s") == ingest(text, "s")

    def test_chapter_breaks_by_byte_offset(self):
        part_a = "The first chapter text. It has two sentences. "
        part_b = "The second chapter starts. It also continues."
        raw = part_a + part_b
        offset = len(part_a.encode("utf-8"))
        story = ingest(raw, "s1", chapter_breaks=[offset])
        assert len(story.chapters) == 2
        assert story.chapters[0].chapter_id != story.chapters[1].chapter_id
        assert len(story.chapters[0].sentences) == 2
        assert story.chapters[1].sentences[0].text == "The second chapter starts."

    def test_coverage_modulo_whitespace(self):
        raw = "It was cold.\n\nSnow fell thickly. Nobody spoke."
        story = ingest(raw, "s1")
        joined = " ".join(s.text for c in story.chapters for s in c.sentences)
        assert joined.split() == raw.split()


class TestCountTokens:
    def test_empty(self):
        assert count_tokens("") == 0
        assert count_tokens("   ") == 0

    def test_whitespace_tokens(self):
        assert count_tokens("one two three") == 3

    def test_nonnegative_and_deterministic(self):
        text = "a b  c\nd"
        assert count_tokens(text) == count_tokens(text) == 4


class TestMakeBlocks:
    def test_fourteen_sentences_thirteen_blocks(self):
        chapter = uniform_chapter(14, tokens_per_sentence=5)
        blocks = make_blocks(chapter, WindowSpec(12, 512, 128))
        assert len(blocks) == 13
        last = blocks[12]
        assert [s.index for s in last.context] == list(range(1, 13))

    def test_two_sentences(self):
        chapter = make_chapter(["First one here.", "Second one here."])
        blocks = make_blocks(chapter, WindowSpec())
        assert len(blocks) == 1
        assert [s.index for s in blocks[0].context] == [0]
        assert [s.index for s in blocks[0].target] == [1]

    def test_one_sentence_no_blocks(self):
        chapter = make_chapter(["Alone."])
        assert make_blocks(chapter, WindowSpec()) == []

    def test_target_token_truncation_keeps_head(self):
        chapter = make_chapter(["start here now", "alpha beta gamma delta epsilon"])
        blocks = make_blocks(chapter, WindowSpec(12, 512, 3))
        assert blocks[0].target[0].text == "alpha beta gamma"
        assert blocks[0].target[0].token_count == 3

    def test_context_token_truncation_drops_oldest_first(self):
        chapter = make_chapter(["one two three four", "five six", "seven eight. Nine ten."])
        blocks = make_blocks(chapter, WindowSpec(12, 3, 128))
        # block at t=1: context is sentences 0..1 totalling 6 tokens, budget 3
        ctx = blocks[1].context
        assert [s.text for s in ctx] == ["four", "five six"]
        assert sum(s.token_count for s in ctx) == 3

    def test_context_never_exceeds_window(self):
        chapter = uniform_chapter(30, tokens_per_sentence=2)
        blocks = make_blocks(chapter, WindowSpec(context_sentences=4))
        assert all(len(b.context) <= 4 for b in blocks)

    def test_target_follows_context(self):
        chapter = uniform_chapter(9, tokens_per_sentence=3)
        blocks = make_blocks(chapter, WindowSpec(context_sentences=3))
        for block in blocks:
            assert block.target[0].index == block.context[-1].index + 1
            ctx_idx = {s.index for s in block.context}
            tgt_idx = {s.index for s in block.target}
            assert not ctx_idx & tgt_idx

    def test_target_starts_cover_chapter(self):
        chapter = uniform_chapter(11)
        blocks = make_blocks(chapter, WindowSpec())
        starts = {b.target[0].index for b in blocks}
        assert starts == set(range(1, 11))
        assert len(starts) == len(chapter.sentences) - 1

    def test_block_offset(self):
        chapter = uniform_chapter(4)
        blocks = make_blocks(chapter, WindowSpec(), block_offset=100)
        assert [b.block_id for b in blocks] == [100, 101, 102]


class TestWindowSpec:
    @pytest.mark.parametrize("field", ["context_sentences", "context_token_budget", "target_token_budget"])
    def test_rejects_nonpositive(self, field):
        with pytest.raises(ValueError):
            WindowSpec(**{field: 0})


sentence_text = st.text(
    alphabet=st.sampled_from("abcdefg "), min_size=1, max_size=30
).filter(lambda s: s.strip())


class TestJsonlRoundTrip:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(sentence_text, min_size=1, max_size=6), min_size=1, max_size=4))
    def test_round_trip(self, tmp_path_factory, chapters_texts):
        from storysalience.corpus import Story

        chapters = tuple(
            Chapter(
                chapter_id=f"c{i}",
                title="",
                sentences=tuple(
                    Sentence.make(j, " ".join(t.split())) for j, t in enumerate(texts)
                ),
            )
            for i, texts in enumerate(chapters_texts)
        )
        story = Story(story_id="s", title="s", chapters=chapters)
        path = tmp_path_factory.mktemp("roundtrip") / "stories.jsonl"
        write_stories_jsonl([story], path)
        loaded = load_stories_jsonl(path)
        assert loaded == [story]

    def test_duplicate_chapter_id_rejected(self, tmp_path):
        rec = {
            "story_id": "s",
            "chapter_id": "c0",
            "title": "",
            "sentences": [{"index": 0, "text": "Hi."}],
        }
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(rec) + "\n" + json.dumps(rec) + "\n")
        with pytest.raises(ValueError):
            load_stories_jsonl(path)
