"""End-to-end pipeline driver and measurement.

`geolocate_document` runs the whole chain (extraction, filtering cascade,
postal codes, gazetteer search, disambiguation, ranking) on one tagged
document. The rest of the module measures output quality against ground-truth
coordinates: top-k error, nearest-rank percentile tables, cumulative error
curves, and the mention-scan baseline that bounds what any text-based method
could achieve on a corpus.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from .disambiguation import (
    DEFAULT_BUDGET_SECONDS,
    DEFAULT_FUNCTION,
    DEFAULT_PHASE,
    CandidateSpace,
    GeoTag,
    Phase,
    ScoringFunction,
    disambiguate,
    great_circle_km,
)
from .docio import Document
from .extraction import FilterMode, extract_terms
from .gazetteer import DEFAULT_RESULT_LIMIT, LocationResult
from .text_model import TaggedToken, enforce_group_cap


@dataclass(frozen=True)
class GeolocationOutput:
    tags: tuple[GeoTag, ...]
    mode: FilterMode
    budget_exhausted: bool


def geolocate_document(
    tokens: Sequence[TaggedToken],
    gazetteer,
    *,
    function: ScoringFunction = DEFAULT_FUNCTION,
    phase: Phase = DEFAULT_PHASE,
    budget_seconds: float | None = DEFAULT_BUDGET_SECONDS,
    result_limit: int = DEFAULT_RESULT_LIMIT,
    max_group_size: int = 24,
) -> GeolocationOutput:
    """Run the full pipeline on one tagged document.

    Phrases with no gazetteer results are dropped along with their terms; if
    nothing survives, the output is empty rather than an error.
    """
    outcome = extract_terms(tokens)
    terms = enforce_group_cap(outcome.terms, max_group_size)
    results: dict[str, tuple[LocationResult, ...]] = {}
    for phrase in sorted({t.phrase for t in terms}):
        answer = gazetteer.query(phrase, result_limit)
        if answer.results:
            results[phrase] = answer.results
    kept = {t for t in terms if t.phrase in results}
    if not kept:
        return GeolocationOutput((), outcome.mode, False)
    space = CandidateSpace(kept, results)
    assignment = disambiguate(space, function, phase, budget_seconds)
    return GeolocationOutput(assignment.ranked, outcome.mode, assignment.budget_exhausted)


def geolocate(
    tokens: Sequence[TaggedToken],
    gazetteer,
    function: ScoringFunction = DEFAULT_FUNCTION,
    phase: Phase = DEFAULT_PHASE,
    budget_seconds: float | None = DEFAULT_BUDGET_SECONDS,
) -> tuple[GeoTag, ...]:
    return geolocate_document(
        tokens, gazetteer, function=function, phase=phase, budget_seconds=budget_seconds
    ).tags


def top_k_error(
    tags: Sequence[GeoTag], true_lat: float, true_lon: float, k: int
) -> float | None:
    """Shortest distance from the truth to any of the k highest-ranked tags."""
    if not tags:
        return None
    return min(
        great_circle_km(t.result.latitude, t.result.longitude, true_lat, true_lon)
        for t in tags[:k]
    )


@dataclass(frozen=True)
class EvalRecord:
    """Measurement of one (document, variant) run."""

    doc_id: str
    variant: tuple[ScoringFunction, Phase]
    mode: FilterMode
    top1_error_km: float | None
    topk_error_km: float | None
    top_k: int
    article_type: str | None = None
    flagged_budget: bool = False
    tags: tuple[GeoTag, ...] = ()


def evaluate_documents(
    documents: Iterable[Document],
    gazetteer,
    variants: Sequence[tuple[ScoringFunction, Phase]],
    *,
    budget_seconds: float | None = DEFAULT_BUDGET_SECONDS,
    result_limit: int = DEFAULT_RESULT_LIMIT,
    top_k: int = 5,
    jobs: int = 1,
) -> list[EvalRecord]:
    """Run every variant over every document and collect error records.

    Documents must carry true coordinates; filter and count the rest upstream.
    With jobs > 1, documents are processed by parallel workers over the shared
    read-only gazetteer; record order is preserved either way.
    """
    documents = list(documents)
    for doc in documents:
        if not doc.has_truth:
            raise ValueError(f"{doc.doc_id}: evaluation needs true coordinates")

    def run(doc: Document) -> list[EvalRecord]:
        rows = []
        for function, phase in variants:
            output = geolocate_document(
                doc.tokens,
                gazetteer,
                function=function,
                phase=phase,
                budget_seconds=budget_seconds,
                result_limit=result_limit,
            )
            rows.append(
                EvalRecord(
                    doc_id=doc.doc_id,
                    variant=(function, phase),
                    mode=output.mode,
                    top1_error_km=top_k_error(output.tags, doc.true_lat, doc.true_lon, 1),
                    topk_error_km=top_k_error(output.tags, doc.true_lat, doc.true_lon, top_k),
                    top_k=top_k,
                    article_type=doc.article_type,
                    flagged_budget=output.budget_exhausted,
                    tags=output.tags,
                )
            )
        return rows

    if jobs <= 1:
        batches = [run(doc) for doc in documents]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(run, documents))
    return [record for batch in batches for record in batch]


def nearest_rank(sorted_values: Sequence[float], percentile: float) -> float:
    """Nearest-rank percentile of an ascending sequence (percentile in (0, 100])."""
    if not sorted_values:
        raise ValueError("percentile of empty sequence")
    rank = max(1, math.ceil(percentile / 100.0 * len(sorted_values)))
    return sorted_values[min(rank, len(sorted_values)) - 1]


def variant_name(variant: tuple[ScoringFunction, Phase]) -> str:
    function, phase = variant
    return f"{function.value}:{phase.value}"


def _errors_of(record: EvalRecord, metric: str) -> float | None:
    return record.top1_error_km if metric == "top1" else record.topk_error_km


def percentile_table(
    records: Sequence[EvalRecord],
    percentiles: Sequence[float],
    *,
    metric: str = "top1",
    by_article_type: bool = False,
) -> list[dict]:
    """Per-variant error percentiles (nearest rank), optionally split by type.

    Documents that produced no tags have no error and are excluded from the
    percentile math but still counted in the `documents` column.
    """
    groups: dict[tuple, list[EvalRecord]] = {}
    for record in records:
        key = (record.variant, record.article_type) if by_article_type else (record.variant,)
        groups.setdefault(key, []).append(record)
    rows = []
    for key in sorted(groups, key=lambda k: (variant_name(k[0]), str(k[1:]))):
        group = groups[key]
        errors = sorted(e for r in group if (e := _errors_of(r, metric)) is not None)
        row: dict = {
            "variant": variant_name(key[0]),
            "metric": metric,
            "documents": len(group),
            "measured": len(errors),
        }
        if by_article_type:
            row["article_type"] = key[1] if key[1] is not None else "NULL"
        for pct in percentiles:
            row[f"p{pct:g}_km"] = nearest_rank(errors, pct) if errors else None
        rows.append(row)
    return rows


def cumulative_curve(
    records: Sequence[EvalRecord], *, metric: str = "top1"
) -> list[tuple[float, float, str]]:
    """Rows (fraction, error_km, variant) for plotting cumulative error curves.

    Fractions are taken over all records of the variant, so the curve tops out
    below 1.0 when some documents produced no measurable error.
    """
    by_variant: dict[tuple, list[EvalRecord]] = {}
    for record in records:
        by_variant.setdefault(record.variant, []).append(record)
    rows: list[tuple[float, float, str]] = []
    for variant in sorted(by_variant, key=variant_name):
        group = by_variant[variant]
        errors = sorted(e for r in group if (e := _errors_of(r, metric)) is not None)
        total = len(group)
        for i, error in enumerate(errors, start=1):
            rows.append((i / total, error, variant_name(variant)))
    return rows


def scan_mentions(
    tokens: Sequence[TaggedToken],
    gazetteer,
    true_lat: float,
    true_lon: float,
    max_words: int = 5,
    result_limit: int | None = None,
) -> float | None:
    """Distance from the truth to the closest gazetteer match of any word
    sequence of up to `max_words` consecutive tokens; None when nothing matches.

    No tagging is involved: this is the corpus-level upper bound on what any
    mention-based method could achieve.
    """
    best: float | None = None
    n = len(tokens)
    for start in range(n):
        for stop in range(start, min(start + max_words, n)):
            phrase = " ".join(tokens[i].text for i in range(start, stop + 1))
            for result in gazetteer.query(phrase, result_limit).results:
                d = great_circle_km(result.latitude, result.longitude, true_lat, true_lon)
                if best is None or d < best:
                    best = d
    return best


def summarize_scan(
    distances: Sequence[float | None], thresholds: Sequence[float] = (10.0, 100.0, 161.0)
) -> dict:
    """Corpus summary of mention-scan distances: match rate and threshold shares."""
    total = len(distances)
    matched = [d for d in distances if d is not None]
    summary = {
        "documents": total,
        "matched": len(matched),
        "matched_fraction": len(matched) / total if total else 0.0,
    }
    for threshold in thresholds:
        within = sum(1 for d in matched if d <= threshold)
        summary[f"within_{threshold:g}_km"] = within
        summary[f"within_{threshold:g}_km_fraction"] = within / total if total else 0.0
    return summary
