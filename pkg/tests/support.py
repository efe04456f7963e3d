"""Shared fixtures and independent oracles for the test suite.

The oracles here (brute-force closure, power-set interpretation enumeration,
direct scoring formulas) are deliberately written without reusing the package
internals they validate.
"""

from __future__ import annotations

import json
import random
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from geotagger.disambiguation import CandidateSpace
from geotagger.gazetteer import IndexEntry, LocalIndex, LocationResult
from geotagger.text_model import NerTag, PosGroup, TaggedToken, Term


# ---------------------------------------------------------------------------
# token/term construction helpers

def tokens_from_tagged(spec: str) -> list[TaggedToken]:
    """Build tokens from "text/POS" or "text/POS/NER" space-separated items."""
    tokens = []
    for i, item in enumerate(spec.split()):
        parts = item.split("/")
        text, pos = parts[0], parts[1]
        ner = parts[2] if len(parts) > 2 else "O"
        tokens.append(TaggedToken.from_tags(i, text, pos, ner))
    return tokens


def term(start: int, end: int, phrase: str) -> Term:
    return Term(start, end, phrase)


def rvh_tokens() -> list[TaggedToken]:
    """The development sentence: a classifieds listing with no NER locations."""
    return tokens_from_tagged(
        "A/DT beautifull/NN clean/JJ house/NN for/IN rent/NN ,/, Walking/VBG "
        "distance/NN to/TO RVH/NN and/CC Georgian/JJ college/NN"
    )


# ---------------------------------------------------------------------------
# brute-force oracles

def brute_force_groups(terms) -> set[frozenset[Term]]:
    """Overlap closure via repeated merging; independent of compute_groups."""
    clusters = [{t} for t in terms]
    changed = True
    while changed:
        changed = False
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if any(a != b and a.overlaps(b) for a in clusters[i] for b in clusters[j]):
                    clusters[i] |= clusters.pop(j)
                    changed = True
                    break
            if changed:
                break
    return {frozenset(c) for c in clusters}


def brute_force_interpretations(members) -> set[frozenset[Term]]:
    """All maximal conflict-free subsets via power-set filtering."""
    members = list(members)
    out = set()
    for mask in range(1, 2 ** len(members)):
        subset = [members[i] for i in range(len(members)) if mask >> i & 1]
        if any(
            a != b and a.overlaps(b)
            for i, a in enumerate(subset)
            for b in subset[i + 1 :]
        ):
            continue
        excluded = [m for m in members if m not in subset]
        if all(any(m.overlaps(s) for s in subset) for m in excluded):
            out.add(frozenset(subset))
    return out


# ---------------------------------------------------------------------------
# worked-example fixtures with injected distance tables

def _result(source_id: str, importance: float = 0.5) -> LocationResult:
    # Coordinates are placeholders; these fixtures always inject a distance table.
    return LocationResult(source_id, source_id, 0.0, 0.0, importance)


def table_distance_fn(table: dict[tuple[str, str], float]):
    """Distance oracle backed by a symmetric lookup table keyed by source ids.

    Raises KeyError when a pair outside the table is requested, which doubles
    as a check that conflicting-term distances are never touched.
    """

    def distance(a: LocationResult, b: LocationResult) -> float:
        if a.source_id == b.source_id:
            return 0.0
        key = (a.source_id, b.source_id)
        if key in table:
            return table[key]
        return table[(b.source_id, a.source_id)]

    return distance


# "Waterloo lies between London and Guelph": three disjoint terms, two results
# each, reference pairwise distances, Total Distance scores on the bottom row.
THREE_CITY_DISTANCES = {
    ("wat-on", "lon-uk"): 5797.0,
    ("wat-on", "lon-on"): 79.0,
    ("wat-on", "gue-on"): 24.0,
    ("wat-on", "gue-nd"): 1424.0,
    ("wat-be", "lon-uk"): 328.0,
    ("wat-be", "lon-on"): 6198.0,
    ("wat-be", "gue-on"): 6096.0,
    ("wat-be", "gue-nd"): 6956.0,
    ("lon-uk", "gue-on"): 5774.0,
    ("lon-uk", "gue-nd"): 6655.0,
    ("lon-on", "gue-on"): 102.0,
    ("lon-on", "gue-nd"): 1386.0,
}

THREE_CITY_EXPECTED_SCORES = {
    "wat-on": -103.0,
    "wat-be": -6424.0,
    "lon-uk": -6102.0,
    "lon-on": -181.0,
    "gue-on": -126.0,
    "gue-nd": -2810.0,
}


def three_city_space() -> CandidateSpace:
    terms = {
        Term(0, 0, "Waterloo"),
        Term(3, 3, "London"),
        Term(5, 5, "Guelph"),
    }
    results = {
        "Waterloo": (_result("wat-on"), _result("wat-be")),
        "London": (_result("lon-uk"), _result("lon-on")),
        "Guelph": (_result("gue-on"), _result("gue-nd")),
    }
    return CandidateSpace(terms, results, table_distance_fn(THREE_CITY_DISTANCES))


# "Conestoga Mall in Waterloo": the two-word sequence has two interpretations,
# Weighted Distance scores on the bottom row.
MALL_DISTANCES = {
    ("wat-on", "cm-wat"): 4.0,
    ("wat-on", "cm-ne"): 1495.0,
    ("wat-on", "con-pa"): 523.0,
    ("wat-on", "con-ca"): 3264.0,
    ("wat-on", "mall-dc"): 587.0,
    ("wat-on", "mall-uk"): 5797.0,
    ("wat-be", "cm-wat"): 6117.0,
    ("wat-be", "cm-ne"): 7376.0,
    ("wat-be", "con-pa"): 6105.0,
    ("wat-be", "con-ca"): 8974.0,
    ("wat-be", "mall-dc"): 6225.0,
    ("wat-be", "mall-uk"): 328.0,
    ("con-pa", "mall-dc"): 130.0,
    ("con-pa", "mall-uk"): 5778.0,
    ("con-ca", "mall-dc"): 3541.0,
    ("con-ca", "mall-uk"): 8681.0,
}

MALL_EXPECTED_SCORES = {
    "wat-on": -279.5,
    "wat-be": -4666.75,
    "cm-wat": -4.0,
    "cm-ne": -1495.0,
    "con-pa": -653.0,
    "con-ca": -6805.0,
    "mall-dc": -717.0,
    "mall-uk": -6106.0,
}


def mall_space() -> CandidateSpace:
    # token layout: Conestoga(0) Mall(1) in(2) Waterloo(3)
    terms = {
        Term(0, 0, "Conestoga"),
        Term(1, 1, "Mall"),
        Term(0, 1, "Conestoga Mall"),
        Term(3, 3, "Waterloo"),
    }
    results = {
        "Waterloo": (_result("wat-on", 0.6), _result("wat-be", 0.4)),
        "Conestoga Mall": (_result("cm-wat", 0.9), _result("cm-ne", 0.3)),
        "Conestoga": (_result("con-pa", 0.5), _result("con-ca", 0.2)),
        "Mall": (_result("mall-dc", 0.5), _result("mall-uk", 0.4)),
    }
    return CandidateSpace(terms, results, table_distance_fn(MALL_DISTANCES))


def new_york_city_terms() -> dict[str, Term]:
    return {
        "New": Term(0, 0, "New"),
        "York": Term(1, 1, "York"),
        "City": Term(2, 2, "City"),
        "New York": Term(0, 1, "New York"),
        "York City": Term(1, 2, "York City"),
        "New York City": Term(0, 2, "New York City"),
    }


# ---------------------------------------------------------------------------
# local index fixtures

RVH_INDEX_ROWS = [
    # source_id, name, alt_names, lat, lon, importance, class, display_name
    ("rvh", "Royal Victoria Regional Health Centre", "RVH", "44.41", "-79.66", "0.5",
     "health", "Royal Victoria Regional Health Centre, Barrie, Ontario, Canada"),
    ("gc-barrie", "Georgian College", "", "44.41", "-79.67", "0.7",
     "education", "Georgian College, Barrie, Ontario, Canada"),
    ("gc-collingwood", "Georgian College", "", "44.48", "-80.19", "0.6",
     "education", "Georgian College, Collingwood, Ontario, Canada"),
    ("college-toronto", "College", "", "43.66", "-79.38", "0.5",
     "station", "College, Toronto, Ontario, Canada"),
    ("college-alaska", "College", "", "64.86", "-147.80", "0.4",
     "place", "College, Fairbanks North Star, Alaska, USA"),
    ("college-philippines", "College", "", "14.16", "121.24", "0.3",
     "place", "College, Los Banos, Laguna, Philippines"),
]


def index_rows_to_tsv(rows) -> str:
    return "".join("\t".join(row) + "\n" for row in rows)


def write_index_file(tmp_path, rows, name="index.tsv"):
    path = tmp_path / name
    path.write_text(index_rows_to_tsv(rows), encoding="utf-8")
    return path


def rvh_index() -> LocalIndex:
    entries = []
    for source_id, name, alt, lat, lon, importance, loc_class, display in RVH_INDEX_ROWS:
        result = LocationResult(
            source_id, display, float(lat), float(lon), float(importance), loc_class
        )
        names = (name, *(a for a in alt.split(";") if a))
        entries.append(IndexEntry(result, names))
    return LocalIndex(entries)


# ---------------------------------------------------------------------------
# random candidate spaces for fuzzing

FUZZ_VOCABULARY = ["alpha", "bravo", "carlin", "delta", "echo", "foxerly", "golfa", "hotel"]


def random_space(
    rng: random.Random,
    max_phrases: int = 10,
    max_results: int = 10,
    min_results: int = 1,
):
    """A random document's candidate space: overlapping spans over a small
    random token stream, shared result lists per phrase, random coordinates."""
    n_tokens = rng.randint(1, 10)
    words = [rng.choice(FUZZ_VOCABULARY) for _ in range(n_tokens)]
    spans = set()
    for _ in range(rng.randint(1, 8)):
        start = rng.randrange(n_tokens)
        end = min(n_tokens - 1, start + rng.randint(0, 2))
        spans.add((start, end))
    terms = {Term(s, e, " ".join(words[s : e + 1])) for s, e in spans}

    phrases = sorted({t.phrase for t in terms})
    if len(phrases) > max_phrases:
        keep = set(phrases[:max_phrases])
        terms = {t for t in terms if t.phrase in keep}
        phrases = sorted(keep)

    results = {}
    for i, phrase in enumerate(phrases):
        bucket = []
        for j in range(rng.randint(min_results, max_results)):
            bucket.append(
                LocationResult(
                    source_id=f"p{i}r{j}",
                    display_name=f"{phrase} #{j}",
                    latitude=rng.uniform(-80.0, 80.0),
                    longitude=rng.uniform(-179.0, 179.0),
                    importance=round(rng.uniform(0.0, 1.0), 6),
                )
            )
        results[phrase] = tuple(bucket)
    return CandidateSpace(terms, results)


# ---------------------------------------------------------------------------
# stub Nominatim-style HTTP server

class StubGazetteerServer:
    """Minimal HTTP server speaking the remote search protocol.

    Records the monotonic arrival time and query of every request; the
    response payload is produced by a configurable responder callable.
    """

    def __init__(self, responder=None):
        self.requests: list[tuple[float, str, int]] = []
        self.responder = responder or (lambda q, limit: [])
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                parsed = urlparse(self.path)
                params = parse_qs(parsed.query)
                query = params.get("q", [""])[0]
                limit = int(params.get("limit", ["10"])[0])
                outer.requests.append((time.monotonic(), query, limit))
                payload = outer.responder(query, limit)
                if isinstance(payload, tuple):  # (status, body-bytes)
                    status, body = payload
                else:
                    status, body = 200, json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()


def nominatim_item(place_id, lat, lon, name, importance=0.5, osm=None, cls="place"):
    item = {
        "place_id": place_id,
        "lat": str(lat),
        "lon": str(lon),
        "display_name": name,
        "importance": importance,
        "class": cls,
    }
    if osm:
        item["osm_type"], item["osm_id"] = osm
    return item
