"""Command-line orchestration for the salience pipeline.

Subcommands: ingest, build-kb, label, salience, perplexity, evaluate,
plotdata. Every artifact embeds the scorer fingerprint and config hash;
runs with the same seed and config are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import alignment as alignment_mod
from . import corpus as corpus_mod
from . import evaluation as evaluation_mod
from .config import RunConfig, story_seed
from .embeddings import HashedBowEmbedder
from .errors import EmptyStoryError
from .remote import RemoteScorer
from .retrieval import KnowledgeBase, RetrievalMode
from .salience import (
    MeasureId,
    parse_measures,
    profile_chapter,
    profile_from_record,
    profile_to_record,
)
from .scoring import ReferenceScorer, perplexity

ENDPOINT_ENV = "SALIENCE_SCORER_ENDPOINT"


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_jsonl(path: Path, records) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for name in (
        "mode", "k", "seed", "scorer", "endpoint", "ngram_order", "ngram_smoothing",
        "dim", "kb_path", "memory_policy", "memory_capacity", "clus_polarity",
    ):
        if hasattr(args, name):
            overrides[name] = getattr(args, name)
    if getattr(args, "measures", None):
        overrides["measures"] = tuple(args.measures.split(","))
    config = config.override(**overrides)
    env_endpoint = os.environ.get(ENDPOINT_ENV)
    if env_endpoint:
        config = config.override(scorer="remote", endpoint=env_endpoint)
    return config


def _make_scorer(config: RunConfig, stories):
    if config.scorer == "remote":
        if not config.endpoint:
            raise ValueError("remote scorer selected but no endpoint configured")
        return RemoteScorer(config.endpoint)
    if config.scorer != "reference":
        raise ValueError(f"unknown scorer '{config.scorer}'")
    return ReferenceScorer(
        stories, order=config.ngram_order, smoothing=config.ngram_smoothing, dim=config.dim
    )


# ---------------------------------------------------------------------------
# Commands

def cmd_ingest(args) -> int:
    source = Path(args.input)
    if source.suffix == ".jsonl":
        stories = corpus_mod.load_stories_jsonl(source)
    else:
        raw = source.read_text(encoding="utf-8")
        breaks = None
        if args.chapter_regex:
            pattern = re.compile(args.chapter_regex, re.MULTILINE)
            data = raw.encode("utf-8")
            breaks = [
                len(raw[: m.start()].encode("utf-8"))
                for m in pattern.finditer(raw)
                if 0 < len(raw[: m.start()].encode("utf-8")) < len(data)
            ]
        story_id = args.story_id or source.stem
        stories = [corpus_mod.ingest(raw, story_id, breaks)]
    corpus_mod.write_stories_jsonl(stories, args.out)
    total = sum(len(c.sentences) for s in stories for c in s.chapters)
    print(f"ingested {len(stories)} stories, {total} sentences -> {args.out}")
    return 0


def cmd_build_kb(args) -> int:
    embedder = HashedBowEmbedder(dim=args.dim)

    def passages():
        with open(args.input, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                yield rec["passage_id"], rec["text"]

    kb = KnowledgeBase.build(passages(), embedder)
    kb.save(args.out)
    print(f"built KB with {len(kb)} passages (dim={kb.dim}) -> {args.out}")
    return 0


def cmd_label(args) -> int:
    config = alignment_mod.AlignmentConfig(
        window_fraction=args.rho,
        min_similarity=args.mu,
        max_drop=args.theta,
        max_targets=args.max_targets,
    )
    embedder = HashedBowEmbedder(dim=args.dim, sublinear=True)
    pairs = []
    with open(args.pairs, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(json.loads(line))
    label_sets, stats = alignment_mod.label_corpus(pairs, embedder, config)
    out_dir = Path(args.out)
    provenance = {
        "window_fraction": config.window_fraction,
        "min_similarity": config.min_similarity,
        "max_drop": config.max_drop,
        "max_targets": config.max_targets,
        "embedder": embedder.fingerprint,
    }
    document = alignment_mod.label_sets_to_document(label_sets)
    document["config"] = provenance
    _write_json(out_dir / "labels.json", document)
    stats_payload = stats.to_dict()
    stats_payload["config"] = provenance
    _write_json(out_dir / "label_stats.json", stats_payload)
    print(
        f"labeled {stats.chapters} chapters: {stats.total_salient} salient of "
        f"{stats.total_sentences} sentences -> {out_dir}"
    )
    return 0


def _profile_story(story, config: RunConfig, scorer, kb, measures, dump):
    settings = config.salience_settings()
    cache = None
    if settings.mode not in (RetrievalMode.OFF,):
        cache = settings.new_cache()
    records = []
    dump_records: list[dict] = []
    block_offset = 0
    seed = story_seed(config, story.story_id)
    for chapter in story.chapters:
        sink = None
        if dump:
            def sink(entry, _chapter=chapter):
                entry = dict(entry)
                entry["story_id"] = story.story_id
                entry["chapter_id"] = _chapter.chapter_id
                dump_records.append(entry)
        offset = block_offset
        # block ids track the sentence's position within the whole story,
        # so the offset advances even across chapters too short to profile
        block_offset += len(chapter.sentences)
        if len(chapter.sentences) < 2:
            continue
        profile = profile_chapter(
            chapter,
            measures,
            scorer,
            kb=kb,
            cache=cache,
            seed=seed,
            settings=settings,
            story_id=story.story_id,
            config_hash=config.config_hash,
            block_offset=offset,
            dump_sink=sink,
        )
        records.append(profile_to_record(profile))
    return records, dump_records


def _profile_story_task(payload):
    story, config, scorer, kb, measure_names, dump = payload
    measures = parse_measures(list(measure_names))
    return _profile_story(story, config, scorer, kb, measures, dump)


def cmd_salience(args) -> int:
    config = _load_config(args)
    try:
        measures = parse_measures(list(config.measures))
    except ValueError as exc:
        print(f"error: argument --measures: {exc}", file=sys.stderr)
        return 2
    stories = corpus_mod.load_stories_jsonl(args.stories)
    stories.sort(key=lambda s: s.story_id)
    out_dir = Path(args.out)
    out_path = out_dir / "salience.jsonl"

    existing: dict[tuple[str, str], dict] = {}
    if args.resume and out_path.exists():
        stale = []
        with open(out_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if record.get("config_hash") != config.config_hash:
                    stale.append(record.get("chapter_id"))
                else:
                    existing[(record["story_id"], record["chapter_id"])] = record
        if stale and not args.force:
            raise SystemExit(
                f"--resume: {len(stale)} existing records carry a different config_hash "
                f"(e.g. {stale[0]}); rerun with --force to discard them"
            )

    scorer = _make_scorer(config, stories)
    kb = KnowledgeBase.load(config.kb_path) if config.kb_path else None

    pending = [s for s in stories if any(
        (s.story_id, c.chapter_id) not in existing for c in s.chapters if len(c.sentences) >= 2
    )]
    measure_names = tuple(sorted(m.value for m in measures))
    all_records: list[dict] = []
    all_dumps: list[dict] = []
    payloads = [(s, config, scorer, kb, measure_names, args.dump_retrieval) for s in pending]
    if config.scorer == "remote":
        # socket handles do not survive fork; remote runs stay single-process
        args.workers = 1
    if args.workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_profile_story_task, payloads))
    else:
        results = [_profile_story_task(p) for p in payloads]
    fresh: dict[tuple[str, str], dict] = {}
    for records, dumps in results:
        for record in records:
            fresh[(record["story_id"], record["chapter_id"])] = record
        all_dumps.extend(dumps)

    for story in stories:
        for chapter in story.chapters:
            key = (story.story_id, chapter.chapter_id)
            record = fresh.get(key) or existing.get(key)
            if record is not None:
                all_records.append(record)
    _write_jsonl(out_path, all_records)
    if args.dump_retrieval:
        _write_jsonl(out_dir / "retrieved.jsonl", all_dumps)
    print(
        f"profiled {len(fresh)} chapters ({len(existing)} reused) with "
        f"{len(measures)} measures -> {out_path}"
    )
    return 0


def cmd_perplexity(args) -> int:
    config = _load_config(args)
    stories = corpus_mod.load_stories_jsonl(args.stories)
    stories.sort(key=lambda s: s.story_id)
    scorer = _make_scorer(config, stories)
    kb = KnowledgeBase.load(config.kb_path) if config.kb_path else None
    mode = RetrievalMode(config.mode)
    settings = config.salience_settings()
    reports = []
    for story in stories:
        cache = settings.new_cache()
        blocks = []
        offset = 0
        for chapter in story.chapters:
            blocks.extend(
                corpus_mod.make_blocks(chapter, settings.window, block_offset=offset)
            )
            offset += len(chapter.sentences)
        if not blocks:
            continue
        rng = np.random.default_rng(story_seed(config, story.story_id, "scrambled"))
        report = perplexity(blocks, mode, scorer, kb=kb, cache=cache, k=config.k, rng=rng)
        reports.append(
            {
                "story_id": story.story_id,
                "mode": report.mode,
                "median_perplexity": report.median,
                "per_block": list(report.per_block),
                "block_ids": list(report.block_ids),
                "fingerprint": report.fingerprint,
                "config_hash": config.config_hash,
            }
        )
    _write_json(Path(args.out), {"mode": mode.value, "stories": reports})
    medians = [r["median_perplexity"] for r in reports]
    overall = sorted(medians)[len(medians) // 2] if medians else float("nan")
    print(f"mode={mode.value} median perplexity per story: {medians} (mid {overall})")
    return 0


def _load_profiles(path: str):
    profiles = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                profiles.append(profile_from_record(json.loads(line)))
    return profiles


def _load_labels(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return alignment_mod.label_sets_from_document(json.load(fh))


def cmd_evaluate(args) -> int:
    profiles = _load_profiles(args.profiles)
    labels = _load_labels(args.labels)
    report = evaluation_mod.evaluate(profiles, labels)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "per_chapter.csv").write_text(
        evaluation_mod.per_chapter_csv(report), encoding="utf-8"
    )
    (out_dir / "summary.csv").write_text(evaluation_mod.summary_csv(report), encoding="utf-8")
    print(
        f"evaluated {report.chapters_total} chapters "
        f"({report.chapters_with_positives} with positives) -> {out_dir}"
    )
    return 0


def cmd_plotdata(args) -> int:
    profiles = _load_profiles(args.profiles)
    labels = _load_labels(args.labels)
    records = evaluation_mod.plot_data_records(profiles, labels)
    _write_jsonl(Path(args.out), records)
    print(f"wrote plot data for {len(records)} chapters -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--mode", choices=[m.value for m in RetrievalMode], default=None)
    parser.add_argument("--k", type=int, default=None, help="retrieved passages per block")
    parser.add_argument("--scorer", choices=["reference", "remote"], default=None)
    parser.add_argument("--endpoint", default=None, help="remote scorer endpoint")
    parser.add_argument("--ngram-order", dest="ngram_order", type=int, default=None)
    parser.add_argument("--ngram-smoothing", dest="ngram_smoothing", type=float, default=None)
    parser.add_argument("--dim", type=int, default=None, help="embedding dimension")
    parser.add_argument("--kb", dest="kb_path", default=None, help="knowledgebase directory")
    parser.add_argument("--memory-policy", dest="memory_policy", choices=["lru", "fifo"], default=None)
    parser.add_argument("--memory-capacity", dest="memory_capacity", type=int, default=None)
    parser.add_argument("--clus-polarity", dest="clus_polarity", choices=["similarity", "distance"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="storysalience",
        description="Unsupervised narrative event-salience scoring pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="split raw text or normalize JSONL into stories")
    p.add_argument("--input", required=True)
    p.add_argument("--story-id", default=None)
    p.add_argument("--chapter-regex", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-kb", help="embed passages into an inner-product index")
    p.add_argument("--input", required=True, help="JSONL of {passage_id, text}")
    p.add_argument("--dim", type=int, default=768)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_kb)

    p = sub.add_parser("label", help="align summaries to full text into silver labels")
    p.add_argument("--pairs", required=True, help="JSONL of chapter/summary pairs")
    p.add_argument("--rho", type=float, default=0.10)
    p.add_argument("--mu", type=float, default=0.35)
    p.add_argument("--theta", type=float, default=0.05)
    p.add_argument("--max-targets", dest="max_targets", type=int, default=3)
    p.add_argument("--dim", type=int, default=768)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("salience", help="score salience measures over a story corpus")
    p.add_argument("--stories", required=True)
    p.add_argument("--measures", default=None, help="comma-separated measure names")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--force", action="store_true")
    p.add_argument("--dump-retrieval", dest="dump_retrieval", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_salience)

    p = sub.add_parser("perplexity", help="median perplexity under one retrieval mode")
    p.add_argument("--stories", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_perplexity)

    p = sub.add_parser("evaluate", help="score profiles against silver labels")
    p.add_argument("--profiles", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plotdata", help="emit per-sentence scores and labels for plotting")
    p.add_argument("--profiles", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (OSError, ValueError, KeyError, EmptyStoryError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
