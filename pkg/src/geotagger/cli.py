"""Command-line interface.

Four commands: `build-index` validates and normalizes a gazetteer entry file,
`geolocate` tags documents with ranked coordinates, `evaluate` scores one or
all sixteen variants against ground truth, and `scan-mentions` runs the
mention-scan baseline. Exit codes: 0 success, 1 partial (some documents
failed), 2 configuration or environment error.
"""

from __future__ import annotations

import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .disambiguation import (
    ALL_VARIANTS,
    DEFAULT_BUDGET_SECONDS,
    DEFAULT_FUNCTION,
    DEFAULT_PHASE,
    GeoTag,
    Phase,
    ScoringFunction,
)
from .docio import Document, iter_documents
from .errors import (
    BackendUnavailableError,
    ConfigError,
    GazetteerFormatError,
    GeotaggerError,
)
from .evaluation import (
    cumulative_curve,
    evaluate_documents,
    geolocate_document,
    percentile_table,
    scan_mentions,
    summarize_scan,
    variant_name,
)
from .gazetteer import (
    DEFAULT_RESULT_LIMIT,
    RemoteGazetteer,
    build_index,
    write_entries,
)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def _load_config(config_path: str | None) -> dict:
    if not config_path:
        return {}
    try:
        with open(config_path, "r", encoding="utf-8") as handle:
            config = json.load(handle)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError(f"config file {config_path} must hold a JSON object")
    return config


def _setting(ctx: click.Context, config: dict, name: str, flag_value):
    """Flag wins over config file wins over the flag's default."""
    source = ctx.get_parameter_source(name)
    if source is not None and source.name != "DEFAULT":
        return flag_value
    return config.get(name, flag_value)


def _open_gazetteer(gazetteer_path, remote_url, cache_path, limit):
    if bool(gazetteer_path) == bool(remote_url):
        raise ConfigError("exactly one of --gazetteer and --remote-url is required")
    if gazetteer_path:
        return build_index(gazetteer_path)
    if not cache_path:
        raise ConfigError("remote mode requires --cache")
    return RemoteGazetteer(remote_url, cache_path, default_limit=limit)


def _tag_payload(tag: GeoTag) -> dict:
    return {
        "rank": tag.rank,
        "phrase": tag.phrase,
        "start": tag.start,
        "end": tag.end,
        "latitude": tag.result.latitude,
        "longitude": tag.result.longitude,
        "display_name": tag.result.display_name,
        "source_id": tag.result.source_id,
        "importance": tag.result.importance,
        "score": tag.score,
    }


def _echo_error(message: str) -> None:
    click.echo(f"error: {message}", err=True)


@click.group()
@click.version_option(package_name="geotagger")
def main() -> None:
    """Toponym extraction, disambiguation and evaluation for tagged text."""


@main.command("build-index")
@click.argument("entries_file", type=click.Path(dir_okay=False))
@click.argument("out_index", type=click.Path(dir_okay=False, writable=True))
def cmd_build_index(entries_file: str, out_index: str) -> None:
    """Validate an entry file and write it back in canonical form."""
    try:
        index = build_index(entries_file)
    except (GazetteerFormatError, OSError, ValueError) as exc:
        _echo_error(str(exc))
        sys.exit(EXIT_CONFIG)
    write_entries(out_index, index.entries)
    click.echo(f"{index.entry_count} entries")


_variant_option = click.option(
    "--variant",
    type=click.Choice([f.value for f in ScoringFunction]),
    default=DEFAULT_FUNCTION.value,
    show_default=True,
    help="Scoring function.",
)
_phase_option = click.option(
    "--phase",
    type=click.Choice([p.value for p in Phase]),
    default=DEFAULT_PHASE.value,
    show_default=True,
    help="Greedy loop variant.",
)
_gazetteer_options = [
    click.option("--gazetteer", type=click.Path(dir_okay=False), help="Local index TSV."),
    click.option(
        "--remote-url", envvar="GEOTAGGER_REMOTE_URL", help="Nominatim-compatible base URL."
    ),
    click.option(
        "--cache",
        envvar="GEOTAGGER_CACHE",
        type=click.Path(dir_okay=False),
        help="Response cache path (required with --remote-url).",
    ),
]


def _add_options(options):
    def wrap(func):
        for option in reversed(options):
            func = option(func)
        return func

    return wrap


@main.command("geolocate")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@_add_options(_gazetteer_options)
@_variant_option
@_phase_option
@click.option("--limit", default=DEFAULT_RESULT_LIMIT, show_default=True, type=int)
@click.option("--budget-secs", default=DEFAULT_BUDGET_SECONDS, show_default=True, type=float)
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.pass_context
def cmd_geolocate(
    ctx: click.Context,
    input_path: str,
    output_path: str,
    gazetteer: str | None,
    remote_url: str | None,
    cache: str | None,
    variant: str,
    phase: str,
    limit: int,
    budget_secs: float,
    jobs: int,
    config_path: str | None,
) -> None:
    """Tag each input document with ranked geographic coordinates."""
    try:
        config = _load_config(config_path)
        variant = _setting(ctx, config, "variant", variant)
        phase = _setting(ctx, config, "phase", phase)
        limit = int(_setting(ctx, config, "limit", limit))
        budget_secs = float(_setting(ctx, config, "budget_secs", budget_secs))
        jobs = int(_setting(ctx, config, "jobs", jobs))
        gazetteer = _setting(ctx, config, "gazetteer", gazetteer)
        remote_url = _setting(ctx, config, "remote_url", remote_url)
        cache = _setting(ctx, config, "cache", cache)
        backend = _open_gazetteer(gazetteer, remote_url, cache, limit)
        function = ScoringFunction(variant)
        loop_phase = Phase(phase)
    except (ConfigError, GazetteerFormatError, OSError, ValueError) as exc:
        _echo_error(str(exc))
        sys.exit(EXIT_CONFIG)

    failures = 0
    produced = 0

    def run(item):
        line_no, doc = item
        if not isinstance(doc, Document):
            return line_no, doc, None
        try:
            output = geolocate_document(
                doc.tokens,
                backend,
                function=function,
                phase=loop_phase,
                budget_seconds=budget_secs,
                result_limit=limit,
            )
        except BackendUnavailableError:
            raise
        except GeotaggerError as exc:
            return line_no, exc, None
        return line_no, doc, output

    try:
        items = list(iter_documents(input_path))
    except OSError as exc:
        _echo_error(str(exc))
        sys.exit(EXIT_CONFIG)

    try:
        with open(output_path, "w", encoding="utf-8") as out:
            with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
                for line_no, doc, output in pool.map(run, items):
                    if output is None:
                        failures += 1
                        _echo_error(f"line {line_no}: {doc}")
                        continue
                    record = {
                        "id": doc.doc_id,
                        "mode": output.mode.value,
                        "budget_exhausted": output.budget_exhausted,
                        "tags": [_tag_payload(t) for t in output.tags],
                    }
                    out.write(json.dumps(record, sort_keys=True) + "\n")
                    produced += 1
    except BackendUnavailableError as exc:
        _echo_error(str(exc))
        sys.exit(EXIT_CONFIG)

    click.echo(f"{produced} documents tagged, {failures} failed")
    sys.exit(EXIT_PARTIAL if failures else EXIT_OK)


def _parse_percentiles(raw: str) -> list[float]:
    try:
        values = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --percentiles value {raw!r}") from exc
    if not values or any(not 0 < v <= 100 for v in values):
        raise ConfigError("--percentiles must be in (0, 100]")
    return values


@main.command("evaluate")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--output", "output_dir", required=True, type=click.Path(file_okay=False))
@_add_options(_gazetteer_options)
@_variant_option
@_phase_option
@click.option("--all-variants", is_flag=True, help="Evaluate all 16 variants.")
@click.option("--percentiles", default="10,25,50", show_default=True)
@click.option("--top-k", default=5, show_default=True, type=int)
@click.option("--limit", default=DEFAULT_RESULT_LIMIT, show_default=True, type=int)
@click.option("--budget-secs", default=DEFAULT_BUDGET_SECONDS, show_default=True, type=float)
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--by-type", is_flag=True, help="Also split percentiles by article type.")
@click.option("--group-by-user", is_flag=True, help="Concatenate documents per user first.")
def cmd_evaluate(
    input_path: str,
    output_dir: str,
    gazetteer: str | None,
    remote_url: str | None,
    cache: str | None,
    variant: str,
    phase: str,
    all_variants: bool,
    percentiles: str,
    top_k: int,
    limit: int,
    budget_secs: float,
    jobs: int,
    by_type: bool,
    group_by_user: bool,
) -> None:
    """Measure accuracy against ground-truth coordinates; write CSV reports."""
    try:
        backend = _open_gazetteer(gazetteer, remote_url, cache, limit)
        pct_values = _parse_percentiles(percentiles)
        variants = (
            list(ALL_VARIANTS)
            if all_variants
            else [(ScoringFunction(variant), Phase(phase))]
        )
    except (ConfigError, GazetteerFormatError, OSError, ValueError) as exc:
        _echo_error(str(exc))
        sys.exit(EXIT_CONFIG)

    documents: list[Document] = []
    rejected = 0
    for line_no, item in iter_documents(input_path):
        if not isinstance(item, Document):
            rejected += 1
            _echo_error(f"line {line_no}: {item}")
        elif not item.has_truth:
            rejected += 1
            _echo_error(f"line {line_no}: {item.doc_id}: no true coordinates")
        else:
            documents.append(item)
    if group_by_user:
        from .docio import concatenate_by_user

        documents = [d for d in concatenate_by_user(documents) if d.has_truth]

    try:
        records = evaluate_documents(
            documents,
            backend,
            variants,
            budget_seconds=budget_secs,
            result_limit=limit,
            top_k=top_k,
            jobs=max(1, jobs),
        )
    except BackendUnavailableError as exc:
        _echo_error(str(exc))
        sys.exit(EXIT_CONFIG)

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    table_rows = []
    for metric in ("top1", "topk"):
        table_rows.extend(
            percentile_table(records, pct_values, metric=metric, by_article_type=by_type)
        )
    metric_label = {"top1": "top1", "topk": f"top{top_k}"}
    with (out / "percentiles.csv").open("w", encoding="utf-8", newline="") as handle:
        header = ["variant", "metric", "documents", "measured"]
        if by_type:
            header.append("article_type")
        header += [f"p{p:g}_km" for p in pct_values]
        writer = csv.DictWriter(handle, fieldnames=header)
        writer.writeheader()
        for row in table_rows:
            row = dict(row)
            row["metric"] = metric_label[row["metric"]]
            writer.writerow(row)

    with (out / "curve.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["fraction", "error_km", "variant"])
        for fraction, error, name in cumulative_curve(records, metric="top1"):
            writer.writerow([f"{fraction:.6f}", f"{error:.6f}", name])

    with (out / "results.jsonl").open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(
                json.dumps(
                    {
                        "id": record.doc_id,
                        "variant": variant_name(record.variant),
                        "mode": record.mode.value,
                        "top1_error_km": record.top1_error_km,
                        f"top{record.top_k}_error_km": record.topk_error_km,
                        "flagged_budget": record.flagged_budget,
                        "article_type": record.article_type,
                        "tags": [_tag_payload(t) for t in record.tags],
                    },
                    sort_keys=True,
                )
                + "\n"
            )

    click.echo(
        f"{len(documents)} documents x {len(variants)} variants evaluated, "
        f"{rejected} rejected"
    )
    sys.exit(EXIT_PARTIAL if rejected else EXIT_OK)


@main.command("scan-mentions")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@_add_options(_gazetteer_options)
@click.option("--max-words", default=5, show_default=True, type=int)
@click.option("--limit", default=None, type=int, help="Per-query result cap (default: all).")
def cmd_scan_mentions(
    input_path: str,
    output_path: str,
    gazetteer: str | None,
    remote_url: str | None,
    cache: str | None,
    max_words: int,
    limit: int | None,
) -> None:
    """Upper-bound baseline: distance to the closest gazetteer mention."""
    try:
        backend = _open_gazetteer(gazetteer, remote_url, cache, limit or DEFAULT_RESULT_LIMIT)
    except (ConfigError, GazetteerFormatError, OSError) as exc:
        _echo_error(str(exc))
        sys.exit(EXIT_CONFIG)

    rejected = 0
    per_doc: list[tuple[str, float | None]] = []
    for line_no, item in iter_documents(input_path):
        if not isinstance(item, Document):
            rejected += 1
            _echo_error(f"line {line_no}: {item}")
            continue
        if not item.has_truth:
            rejected += 1
            _echo_error(f"line {line_no}: {item.doc_id}: no true coordinates")
            continue
        distance = scan_mentions(
            item.tokens, backend, item.true_lat, item.true_lon, max_words, limit
        )
        per_doc.append((item.doc_id, distance))

    with open(output_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "nearest_mention_km"])
        for doc_id, distance in per_doc:
            writer.writerow([doc_id, "" if distance is None else f"{distance:.6f}"])

    curve_path = Path(output_path).with_suffix(".curve.csv")
    matched = sorted(d for _, d in per_doc if d is not None)
    with curve_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["fraction", "nearest_mention_km"])
        for i, distance in enumerate(matched, start=1):
            writer.writerow([f"{i / len(per_doc):.6f}", f"{distance:.6f}"])

    summary = summarize_scan([d for _, d in per_doc])
    click.echo(
        f"{summary['matched']}/{summary['documents']} documents "
        f"({summary['matched_fraction']:.1%}) match a gazetteer entry"
    )
    for threshold in (10, 100, 161):
        click.echo(
            f"{summary[f'within_{threshold}_km_fraction']:.1%} of documents mention a "
            f"location within {threshold} km"
        )
    sys.exit(EXIT_PARTIAL if rejected else EXIT_OK)


if __name__ == "__main__":
    main()
