"""Knowledge-base backends.

Two interchangeable gazetteers answer `query(phrase, limit)` with ranked
location results:

* `LocalIndex` — an in-memory, case-insensitive exact-match index built from a
  tab-separated entry file; deterministic and suitable for offline runs and
  tests.
* `RemoteGazetteer` — a Nominatim-protocol HTTP client with a process-wide
  rate limiter (default one request per second, matching the public usage
  policy) and a persistent response cache so reruns never touch the network.

Entry file format (UTF-8, one location per line, tab-separated):

    source_id  name  alt_names(;-separated)  latitude  longitude  importance  class  display_name

`importance` may be empty (defaults to 0.5), as may `class` and `display_name`.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import requests

from .errors import (
    BackendUnavailableError,
    GazetteerFormatError,
    MalformedResponseError,
)

logger = logging.getLogger(__name__)

DEFAULT_IMPORTANCE = 0.5
DEFAULT_RESULT_LIMIT = 10
ENTRY_COLUMNS = 8


@dataclass(frozen=True)
class LocationResult:
    """One gazetteer hit: a point location with a relevance value."""

    source_id: str
    display_name: str
    latitude: float
    longitude: float
    importance: float = DEFAULT_IMPORTANCE
    location_class: str | None = None

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")
        if self.importance < 0.0:
            raise ValueError(f"importance must be nonnegative: {self.importance}")


@dataclass(frozen=True)
class QueryOutcome:
    """Results for one phrase, ordered by importance (ties by source id)."""

    phrase: str
    results: tuple[LocationResult, ...]

    def __bool__(self) -> bool:
        return bool(self.results)


def normalize_phrase(phrase: str) -> str:
    """Lookup key: lowercase with runs of whitespace collapsed to single spaces."""
    return " ".join(phrase.split()).lower()


def rank_by_importance(
    results: Iterable[LocationResult], limit: int | None
) -> tuple[LocationResult, ...]:
    ordered = sorted(results, key=lambda r: (-r.importance, r.source_id))
    return tuple(ordered if limit is None else ordered[:limit])


@dataclass(frozen=True)
class IndexEntry:
    result: LocationResult
    names: tuple[str, ...]


class LocalIndex:
    """Immutable exact-match index over entry names and alternative names."""

    def __init__(self, entries: Iterable[IndexEntry]):
        self.entries: tuple[IndexEntry, ...] = tuple(entries)
        by_name: dict[str, list[LocationResult]] = {}
        for entry in self.entries:
            for name in entry.names:
                key = normalize_phrase(name)
                if not key:
                    continue
                bucket = by_name.setdefault(key, [])
                if all(r.source_id != entry.result.source_id for r in bucket):
                    bucket.append(entry.result)
        self._by_name = by_name

    @property
    def entry_count(self) -> int:
        return len(self.entries)

    def query(self, phrase: str, limit: int | None = DEFAULT_RESULT_LIMIT) -> QueryOutcome:
        """Up to `limit` results for the phrase; an empty outcome is a valid answer."""
        matches = self._by_name.get(normalize_phrase(phrase), [])
        return QueryOutcome(phrase, rank_by_importance(matches, limit))


def parse_entry_line(line: str) -> IndexEntry:
    """Parse one tab-separated entry row; raises ValueError on any bad field."""
    columns = line.split("\t")
    if len(columns) != ENTRY_COLUMNS:
        raise ValueError(
            f"expected {ENTRY_COLUMNS} tab-separated fields, got {len(columns)}"
        )
    source_id, name, alt_names, lat, lon, importance, loc_class, display_name = (
        c.strip() for c in columns
    )
    if not source_id:
        raise ValueError("empty source_id")
    if not name:
        raise ValueError("empty name")
    result = LocationResult(
        source_id=source_id,
        display_name=display_name or name,
        latitude=float(lat),
        longitude=float(lon),
        importance=float(importance) if importance else DEFAULT_IMPORTANCE,
        location_class=loc_class or None,
    )
    names = (name, *(a.strip() for a in alt_names.split(";") if a.strip()))
    return IndexEntry(result, names)


def build_index(entries_file: str | Path) -> LocalIndex:
    """Load a LocalIndex from a TSV entry file.

    Blank lines and lines starting with '#' are skipped. Any malformed row or
    duplicated source_id raises GazetteerFormatError naming the line.
    """
    path = Path(entries_file)
    entries: list[IndexEntry] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                entry = parse_entry_line(line)
            except ValueError as exc:
                raise GazetteerFormatError(f"{path}: line {line_no}: {exc}") from exc
            if entry.result.source_id in seen_ids:
                raise GazetteerFormatError(
                    f"{path}: line {line_no}: duplicate source_id {entry.result.source_id!r}"
                )
            seen_ids.add(entry.result.source_id)
            entries.append(entry)
    return LocalIndex(entries)


def write_entries(path: str | Path, entries: Iterable[IndexEntry]) -> int:
    """Write entries in the canonical TSV layout; returns the row count."""
    count = 0
    with Path(path).open("w", encoding="utf-8") as handle:
        for entry in entries:
            r = entry.result
            row = (
                r.source_id,
                entry.names[0],
                ";".join(entry.names[1:]),
                repr(r.latitude),
                repr(r.longitude),
                repr(r.importance),
                r.location_class or "",
                r.display_name,
            )
            handle.write("\t".join(row) + "\n")
            count += 1
    return count


class RateLimiter:
    """Enforces a minimum spacing between successive acquisitions, across threads.

    A small guard is added on top of the configured interval so that scheduling
    jitter between the limiter releasing and the caller actually sending cannot
    compress observed spacing below the interval.
    """

    GUARD_SECONDS = 0.005

    def __init__(self, min_interval_s: float = 1.0):
        self.min_interval_s = min_interval_s
        self._lock = threading.Lock()
        self._last: float | None = None

    def wait(self) -> None:
        with self._lock:
            now = time.monotonic()
            if self._last is not None:
                remaining = self._last + self.min_interval_s - now
                if remaining > 0:
                    time.sleep(remaining + self.GUARD_SECONDS)
                    now = time.monotonic()
            self._last = now


# All remote clients in the process share one limiter by default, so the
# one-query-per-second policy holds regardless of how many clients exist.
SHARED_RATE_LIMITER = RateLimiter(1.0)


class ResponseCache:
    """Persistent JSONL cache of remote outcomes keyed by (normalized phrase, limit).

    The file is append-only; entries never expire. A torn final line (from an
    interrupted append) is ignored with a warning, any other corruption raises.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, int | None], tuple[LocationResult, ...]] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        lines = self.path.read_text(encoding="utf-8").splitlines()
        for line_no, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                key = (record["phrase"], record["limit"])
                results = tuple(
                    LocationResult(
                        source_id=item["source_id"],
                        display_name=item["display_name"],
                        latitude=item["latitude"],
                        longitude=item["longitude"],
                        importance=item["importance"],
                        location_class=item.get("location_class"),
                    )
                    for item in record["results"]
                )
            except (ValueError, KeyError, TypeError) as exc:
                if line_no == len(lines):
                    logger.warning("ignoring torn last line of cache %s", self.path)
                    return
                raise GazetteerFormatError(
                    f"{self.path}: line {line_no}: corrupt cache entry: {exc}"
                ) from exc
            self._entries[key] = results

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, phrase: str, limit: int | None) -> tuple[LocationResult, ...] | None:
        return self._entries.get((normalize_phrase(phrase), limit))

    def put(self, phrase: str, limit: int | None, results: tuple[LocationResult, ...]) -> None:
        key = (normalize_phrase(phrase), limit)
        record = {
            "phrase": key[0],
            "limit": limit,
            "results": [
                {
                    "source_id": r.source_id,
                    "display_name": r.display_name,
                    "latitude": r.latitude,
                    "longitude": r.longitude,
                    "importance": r.importance,
                    "location_class": r.location_class,
                }
                for r in results
            ],
        }
        with self._lock:
            self._entries[key] = results
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(record, sort_keys=True) + "\n")


class RemoteGazetteer:
    """Client for a Nominatim-compatible HTTP search endpoint.

    Every network send passes through the rate limiter; responses are served
    from and recorded into the persistent cache, so a repeated query costs no
    network traffic. Transient I/O failures are retried with exponential
    backoff before giving up with BackendUnavailableError.
    """

    def __init__(
        self,
        base_url: str,
        cache: ResponseCache | str | Path,
        *,
        default_limit: int = DEFAULT_RESULT_LIMIT,
        rate_limiter: RateLimiter | None = None,
        max_retries: int = 3,
        backoff_s: float = 0.5,
        timeout_s: float = 10.0,
        session: requests.Session | None = None,
        user_agent: str = "geotagger/0.1",
    ):
        self.base_url = base_url.rstrip("/")
        self.cache = cache if isinstance(cache, ResponseCache) else ResponseCache(cache)
        self.default_limit = default_limit
        self.rate_limiter = rate_limiter or SHARED_RATE_LIMITER
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self._session = session or requests.Session()
        self._headers = {"User-Agent": user_agent}

    def query(self, phrase: str, limit: int | None = None) -> QueryOutcome:
        limit = self.default_limit if limit is None else limit
        cached = self.cache.get(phrase, limit)
        if cached is not None:
            return QueryOutcome(phrase, cached)
        payload = self._fetch(phrase, limit)
        results = self._parse(payload)
        if len(results) > limit:
            logger.warning(
                "endpoint returned %d results for %r with limit %d; truncating",
                len(results),
                phrase,
                limit,
            )
        ranked = rank_by_importance(results, limit)
        self.cache.put(phrase, limit, ranked)
        return QueryOutcome(phrase, ranked)

    def _fetch(self, phrase: str, limit: int):
        params = {"q": phrase, "format": "jsonv2", "limit": str(limit)}
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            self.rate_limiter.wait()
            try:
                response = self._session.get(
                    self.base_url + "/search",
                    params=params,
                    headers=self._headers,
                    timeout=self.timeout_s,
                )
                response.raise_for_status()
            except requests.RequestException as exc:
                last_error = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff_s * 2**attempt)
                continue
            try:
                return response.json()
            except ValueError as exc:
                raise MalformedResponseError(
                    f"endpoint returned non-JSON payload for {phrase!r}"
                ) from exc
        raise BackendUnavailableError(
            f"remote gazetteer unavailable after {self.max_retries} attempts: {last_error}"
        )

    @staticmethod
    def _parse(payload) -> list[LocationResult]:
        if not isinstance(payload, list):
            raise MalformedResponseError("expected a JSON array of results")
        results = []
        for i, item in enumerate(payload):
            try:
                if "osm_type" in item and "osm_id" in item:
                    source_id = f"{item['osm_type']}/{item['osm_id']}"
                else:
                    source_id = str(item["place_id"])
                results.append(
                    LocationResult(
                        source_id=source_id,
                        display_name=str(item.get("display_name", "")),
                        latitude=float(item["lat"]),
                        longitude=float(item["lon"]),
                        importance=float(item.get("importance", DEFAULT_IMPORTANCE)),
                        location_class=item.get("class") or item.get("category"),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedResponseError(f"bad result at position {i}: {exc}") from exc
        return results
