"""Ranking metrics against silver labels and corpus-level aggregation.

All metrics depend only on the ranking induced by the scores; ties are
broken by ascending sentence index everywhere, recorded in report headers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .alignment import SilverLabelSet
from .errors import ShapeError
from .salience import MeasureId, SalienceProfile

logger = logging.getLogger(__name__)

TIE_BREAK_NOTE = "ties broken by ascending sentence index"


def _ranked_indices(scores: list[float]) -> list[int]:
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def average_precision(scores: list[float], labels: list[bool]) -> float:
    """Mean of precision-at-rank over the positive positions.

    Chapters without positives are defined as 0 with a warning.
    """
    if len(scores) != len(labels):
        raise ShapeError(f"{len(scores)} scores for {len(labels)} labels")
    positives = sum(1 for l in labels if l)
    if positives == 0:
        logger.warning("average_precision with no positive labels; returning 0.0")
        return 0.0
    hits = 0
    total = 0.0
    for rank, i in enumerate(_ranked_indices(scores), start=1):
        if labels[i]:
            hits += 1
            total += hits / rank
    return total / positives


def _lcs_length(a: list[str], b: list[str]) -> int:
    """Longest common subsequence via a two-row dynamic program."""
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[-1]


def rouge_l(selected_text: str, reference_text: str) -> float:
    """LCS-based F1 over whitespace word tokens; 0 when either side is empty."""
    sel = selected_text.split()
    ref = reference_text.split()
    if not sel or not ref:
        return 0.0
    lcs = _lcs_length(sel, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(sel)
    recall = lcs / len(ref)
    return 2.0 * precision * recall / (precision + recall)


def recall_at_k(scores: list[float], labels: list[bool]) -> float:
    """Recall of the top-k ranked sentences with k = the positive count."""
    if len(scores) != len(labels):
        raise ShapeError(f"{len(scores)} scores for {len(labels)} labels")
    k = sum(1 for l in labels if l)
    if k == 0:
        logger.warning("recall_at_k with no positive labels; returning 0.0")
        return 0.0
    top = set(_ranked_indices(scores)[:k])
    hit = sum(1 for i in top if labels[i])
    return hit / k


@dataclass(frozen=True)
class MetricRow:
    map: float
    rouge_l: float
    recall_at_k: float


@dataclass
class EvalReport:
    per_chapter: dict[str, dict[MeasureId, MetricRow]]
    corpus_mean: dict[MeasureId, MetricRow]
    chapters_with_positives: int
    chapters_total: int
    skipped: list[str] = field(default_factory=list)
    tie_break: str = TIE_BREAK_NOTE
    fingerprints: tuple[str, ...] = ()
    config_hashes: tuple[str, ...] = ()

    def provenance(self) -> str:
        return (
            f"fingerprints={'|'.join(self.fingerprints) or 'none'}; "
            f"config_hashes={'|'.join(self.config_hashes) or 'none'}"
        )


def _measure_order(measures: set[MeasureId]) -> list[MeasureId]:
    return sorted(measures, key=lambda m: m.value)


def evaluate(profiles: list[SalienceProfile], labels: list[SilverLabelSet]) -> EvalReport:
    """Per-chapter MAP / ROUGE-L / Recall@k for every measure, plus means.

    The ROUGE-L reference is the concatenated gold-salient text; the
    candidate concatenates the k best sentences by the measure, k = gold
    count. Chapters without positives contribute 0 to ROUGE-L but are left
    out of the MAP and recall means.
    """
    by_chapter = {ls.chapter_id: ls for ls in labels}
    per_chapter: dict[str, dict[MeasureId, MetricRow]] = {}
    skipped = []
    sums: dict[MeasureId, list[float]] = {}
    rouge_sums: dict[MeasureId, float] = {}
    positive_chapters = 0
    scored_chapters = 0

    for profile in sorted(profiles, key=lambda p: p.chapter_id):
        label_set = by_chapter.get(profile.chapter_id)
        if label_set is None:
            logger.warning("no label set for chapter '%s'; skipping", profile.chapter_id)
            skipped.append(profile.chapter_id)
            continue
        gold = label_set.labels()
        texts = label_set.texts()
        k = sum(1 for g in gold if g)
        reference = " ".join(t for t, g in zip(texts, gold) if g)
        scored_chapters += 1
        if k > 0:
            positive_chapters += 1
        rows: dict[MeasureId, MetricRow] = {}
        for measure in _measure_order(set(profile.scores)):
            scores = profile.scores[measure]
            if len(scores) != len(gold):
                raise ShapeError(
                    f"chapter '{profile.chapter_id}' measure {measure.value}: "
                    f"{len(scores)} scores for {len(gold)} sentences"
                )
            candidate = " ".join(texts[i] for i in sorted(_ranked_indices(scores)[:k]))
            row = MetricRow(
                map=average_precision(scores, gold),
                rouge_l=rouge_l(candidate, reference),
                recall_at_k=recall_at_k(scores, gold),
            )
            rows[measure] = row
            rouge_sums[measure] = rouge_sums.get(measure, 0.0) + row.rouge_l
            if k > 0:
                bucket = sums.setdefault(measure, [0.0, 0.0])
                bucket[0] += row.map
                bucket[1] += row.recall_at_k
        per_chapter[profile.chapter_id] = rows

    corpus_mean: dict[MeasureId, MetricRow] = {}
    for measure, rouge_total in rouge_sums.items():
        bucket = sums.get(measure, [0.0, 0.0])
        denom = positive_chapters if positive_chapters else 1
        corpus_mean[measure] = MetricRow(
            map=bucket[0] / denom,
            rouge_l=rouge_total / (scored_chapters if scored_chapters else 1),
            recall_at_k=bucket[1] / denom,
        )
    return EvalReport(
        per_chapter=per_chapter,
        corpus_mean=corpus_mean,
        chapters_with_positives=positive_chapters,
        chapters_total=scored_chapters,
        skipped=skipped,
        fingerprints=tuple(sorted({p.scorer_fingerprint for p in profiles if p.scorer_fingerprint})),
        config_hashes=tuple(sorted({p.config_hash for p in profiles if p.config_hash})),
    )


# ---------------------------------------------------------------------------
# CSV / plot-data serialization

def _measure_name(measure: MeasureId) -> str:
    return measure.value


def per_chapter_csv(report: EvalReport) -> str:
    lines = [
        f"# {report.tie_break}; {report.provenance()}",
        "chapter_id,measure,map,rouge_l,recall_at_k",
    ]
    for chapter_id in sorted(report.per_chapter):
        rows = report.per_chapter[chapter_id]
        for measure in _measure_order(set(rows)):
            row = rows[measure]
            lines.append(
                f"{chapter_id},{_measure_name(measure)},{row.map!r},{row.rouge_l!r},{row.recall_at_k!r}"
            )
    return "\n".join(lines) + "\n"


def summary_csv(report: EvalReport) -> str:
    lines = [
        f"# {report.tie_break}; chapters={report.chapters_total}; "
        f"with_positives={report.chapters_with_positives}; {report.provenance()}",
        "measure,map,rouge_l,recall_at_k",
    ]
    for measure in _measure_order(set(report.corpus_mean)):
        row = report.corpus_mean[measure]
        lines.append(
            f"{_measure_name(measure)},{row.map!r},{row.rouge_l!r},{row.recall_at_k!r}"
        )
    return "\n".join(lines) + "\n"


def plot_data_records(
    profiles: list[SalienceProfile], labels: list[SilverLabelSet]
) -> list[dict]:
    """Per-chapter sentence rows for external plotting of scores vs labels."""
    by_chapter = {ls.chapter_id: ls for ls in labels}
    records = []
    for profile in sorted(profiles, key=lambda p: p.chapter_id):
        label_set = by_chapter.get(profile.chapter_id)
        if label_set is None:
            continue
        measures = _measure_order(set(profile.scores))
        sentences = []
        for i, labeled in enumerate(label_set.sentences):
            entry = {
                "index": i,
                "text": labeled.text,
                "salient": labeled.salient,
                "scores": {m.value: profile.scores[m][i] for m in measures},
            }
            sentences.append(entry)
        records.append(
            {
                "chapter_id": profile.chapter_id,
                "fingerprint": profile.scorer_fingerprint,
                "config_hash": profile.config_hash,
                "sentences": sentences,
            }
        )
    return records
