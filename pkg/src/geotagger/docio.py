"""Line-delimited document input shared by the evaluation harness and the CLI.

Each line is one JSON record:

    {"id": "doc-1",
     "lat": 43.46, "lon": -80.52,          # optional true coordinates (WGS84)
     "type": "city",                        # optional article type
     "user": "u42",                         # optional user key for grouping
     "tokens": [{"text": "Waterloo", "pos": "NNP", "ner": "LOCATION"}, ...]}

Instead of "tokens", a record may carry parallel arrays "words", "pos" and
"ner"; their lengths must agree or the document is rejected (this is how
upstream tagger disagreements surface).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import DocumentFormatError, InconsistentTokensError
from .text_model import TaggedToken


@dataclass(frozen=True)
class Document:
    doc_id: str
    tokens: tuple[TaggedToken, ...]
    true_lat: float | None = None
    true_lon: float | None = None
    article_type: str | None = None
    user: str | None = None

    @property
    def has_truth(self) -> bool:
        return self.true_lat is not None and self.true_lon is not None


def parse_document(record: dict) -> Document:
    """Build a Document from one decoded JSON record.

    Raises DocumentFormatError on malformed records and the more specific
    InconsistentTokensError when parallel annotation arrays disagree in length.
    """
    if not isinstance(record, dict):
        raise DocumentFormatError("record is not a JSON object")
    doc_id = record.get("id")
    if not isinstance(doc_id, str) or not doc_id:
        raise DocumentFormatError("missing or empty 'id'")

    if "tokens" in record:
        raw_tokens = record["tokens"]
        if not isinstance(raw_tokens, list):
            raise DocumentFormatError(f"{doc_id}: 'tokens' must be an array")
        tokens = []
        for i, item in enumerate(raw_tokens):
            if not isinstance(item, dict) or "text" not in item or "pos" not in item:
                raise DocumentFormatError(f"{doc_id}: token {i} needs 'text' and 'pos'")
            tokens.append(
                TaggedToken.from_tags(
                    i, str(item["text"]), str(item["pos"]), str(item.get("ner", "O"))
                )
            )
    elif "words" in record:
        words = record.get("words")
        pos = record.get("pos")
        ner = record.get("ner", ["O"] * len(words) if isinstance(words, list) else None)
        if not (isinstance(words, list) and isinstance(pos, list) and isinstance(ner, list)):
            raise DocumentFormatError(f"{doc_id}: 'words', 'pos' and 'ner' must be arrays")
        if not (len(words) == len(pos) == len(ner)):
            raise InconsistentTokensError(
                f"{doc_id}: annotation arrays disagree in length "
                f"(words={len(words)}, pos={len(pos)}, ner={len(ner)})"
            )
        tokens = [
            TaggedToken.from_tags(i, str(w), str(p), str(n))
            for i, (w, p, n) in enumerate(zip(words, pos, ner))
        ]
    else:
        raise DocumentFormatError(f"{doc_id}: record has neither 'tokens' nor 'words'")

    lat, lon = record.get("lat"), record.get("lon")
    if (lat is None) != (lon is None):
        raise DocumentFormatError(f"{doc_id}: 'lat' and 'lon' must be given together")
    if lat is not None:
        lat, lon = float(lat), float(lon)
        if not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0:
            raise DocumentFormatError(f"{doc_id}: true coordinates out of range")

    article_type = record.get("type")
    user = record.get("user")
    return Document(
        doc_id=doc_id,
        tokens=tuple(tokens),
        true_lat=lat,
        true_lon=lon,
        article_type=str(article_type) if article_type is not None else None,
        user=str(user) if user is not None else None,
    )


def iter_documents(path: str | Path) -> Iterator[tuple[int, Document | DocumentFormatError]]:
    """Yield (line_number, Document) per input line, or the parse error instead.

    Blank lines are skipped. Callers decide whether errors abort or are
    counted and skipped.
    """
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError as exc:
                yield line_no, DocumentFormatError(f"line {line_no}: invalid JSON: {exc}")
                continue
            try:
                yield line_no, parse_document(record)
            except DocumentFormatError as exc:
                yield line_no, exc


def load_documents(path: str | Path) -> tuple[list[Document], list[tuple[int, str]]]:
    """Read a whole corpus; returns (documents, [(line_no, error message), ...])."""
    documents: list[Document] = []
    failures: list[tuple[int, str]] = []
    for line_no, item in iter_documents(path):
        if isinstance(item, Document):
            documents.append(item)
        else:
            failures.append((line_no, str(item)))
    return documents, failures


def concatenate_by_user(documents: list[Document]) -> list[Document]:
    """Merge each user's documents into one, averaging the true coordinates.

    Documents without a user key pass through unchanged. Token indices are
    rebuilt so the merged token stream stays contiguous.
    """
    merged: list[Document] = []
    by_user: dict[str, list[Document]] = {}
    for doc in documents:
        if doc.user is None:
            merged.append(doc)
        else:
            by_user.setdefault(doc.user, []).append(doc)
    for user, docs in by_user.items():
        tokens: list[TaggedToken] = []
        for doc in docs:
            for token in doc.tokens:
                tokens.append(
                    TaggedToken(len(tokens), token.text, token.pos_group, token.ner_tag)
                )
        lats = [d.true_lat for d in docs if d.has_truth]
        lons = [d.true_lon for d in docs if d.has_truth]
        merged.append(
            Document(
                doc_id=user,
                tokens=tuple(tokens),
                true_lat=sum(lats) / len(lats) if lats else None,
                true_lon=sum(lons) / len(lons) if lons else None,
                article_type=None,
                user=user,
            )
        )
    return merged
