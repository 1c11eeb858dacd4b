#!/usr/bin/env python3
"""Salience measures vs position baselines on a planted synthetic corpus.

Every chapter hides a few bridge sentences that set up the exact wording of
the sentence that follows; those positions are the silver labels. Prints the
mean MAP per measure, which should rank the coherence measures above the
position baselines.

Usage: python3 scripts/run_synthetic_benchmark.py [--chapters 50] [--seed 31]
"""
import argparse

import numpy as np

from storysalience.corpus import Chapter, Sentence, Story, WindowSpec
from storysalience.evaluation import average_precision
from storysalience.retrieval import RetrievalMode
from storysalience.salience import MeasureId, SalienceSettings, profile_chapter
from storysalience.scoring import ReferenceScorer


def planted_corpus(rng, n_chapters):
    filler_vocab = [f"f{i}" for i in range(30)]
    chapters, labels = [], []
    for c in range(n_chapters):
        n = 16
        planted = sorted(rng.choice(np.arange(1, n - 1), size=3, replace=False))
        texts, flags, t = [], [False] * n, 0
        while t < n:
            if t in planted:
                a, b, d = (f"rare{c}x{t}{s}" for s in ("a", "b", "c"))
                texts.append(f"then {a} {b} {d} came forth")
                texts.append(f"{a} {b} {d} ruled the hour.")
                flags[t] = True
                t += 2
            else:
                texts.append(" ".join(rng.choice(filler_vocab, size=5)) + ".")
                t += 1
        sentences = tuple(Sentence.make(i, x) for i, x in enumerate(texts[:n]))
        chapters.append(Chapter(f"planted:{c}", "", sentences))
        labels.append(flags[: len(sentences)])
    return chapters, labels


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--chapters", type=int, default=50)
    parser.add_argument("--seed", type=int, default=31)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    chapters, labels = planted_corpus(rng, args.chapters)
    train = Story(
        "train", "train",
        (Chapter("train:c0", "", (Sentence.make(0, "separate plain training words here."),)),),
    )
    scorer = ReferenceScorer([train], order=2, smoothing=0.1, dim=32)
    settings = SalienceSettings(
        mode=RetrievalMode.MEM_ONLY, k=4,
        window=WindowSpec(context_sentences=5, target_token_budget=12),
    )
    measures = {
        MeasureId.LIKE_SAL,
        MeasureId.EMB_SAL,
        MeasureId.SWAP_SAL,
        MeasureId.CLUS_SAL,
        MeasureId.RANDOM,
        MeasureId.ASCENDING,
        MeasureId.DESCENDING,
    }
    sums = {m: 0.0 for m in measures}
    for chapter, flags in zip(chapters, labels):
        profile = profile_chapter(
            chapter, measures, scorer, cache=settings.new_cache(),
            settings=settings, seed=args.seed,
        )
        for m in measures:
            sums[m] += average_precision(profile.scores[m], flags)

    print(f"{'measure':<12} {'mean MAP':>9}")
    for m in sorted(measures, key=lambda m: -sums[m]):
        print(f"{m.value:<12} {sums[m] / len(chapters):>9.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
