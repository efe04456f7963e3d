"""Candidate-term extraction from tagged documents.

Builds the candidate term set from contiguous runs of noun/adjective/LOCATION
tokens, reduces it through a three-level cascade (NER locations, then terms
after prepositions, then everything), and finally appends postal-code terms.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .text_model import NerTag, PosGroup, TaggedToken, Term


class FilterMode(str, Enum):
    """Which cascade branch selected the surviving terms."""

    NER_LOCATIONS = "ner_locations"
    AFTER_PREPOSITIONS = "after_prepositions"
    ALL_NOUNS = "all_nouns"
    EMPTY = "empty"


@dataclass(frozen=True)
class ExtractionOutcome:
    terms: frozenset[Term]
    phrases: frozenset[str]
    mode: FilterMode


def _noun_like(token: TaggedToken) -> bool:
    # NER LOCATION counts as a noun while building candidates.
    return token.pos_group is PosGroup.NOUN or token.ner_tag is NerTag.LOCATION


def _candidate_word(token: TaggedToken) -> bool:
    return _noun_like(token) or token.pos_group is PosGroup.ADJECTIVE


def extract_candidates(doc: Sequence[TaggedToken]) -> set[Term]:
    """Every contiguous sequence of noun/adjective/LOCATION words that contains
    at least one noun or LOCATION word.

    Adjective-only (and therefore number-only) sequences are excluded, but
    adjectives and numbers may extend a sequence that contains a noun.
    """
    terms: set[Term] = set()
    n = len(doc)
    run_start = 0
    while run_start < n:
        if not _candidate_word(doc[run_start]):
            run_start += 1
            continue
        run_stop = run_start
        while run_stop < n and _candidate_word(doc[run_stop]):
            run_stop += 1
        for a in range(run_start, run_stop):
            saw_noun = False
            for b in range(a, run_stop):
                saw_noun = saw_noun or _noun_like(doc[b])
                if saw_noun:
                    terms.add(Term.from_span(doc, a, b))
        run_start = run_stop
    return terms


# Groups allowed between a preposition and a term it licenses. Conjunctions
# keep coordinated mentions reachable ("from Waterloo and Toronto").
_BRIDGE_GROUPS = frozenset(
    {PosGroup.NOUN, PosGroup.ADJECTIVE, PosGroup.PREPOSITION, PosGroup.CONJUNCTION}
)


def is_after_preposition(term: Term, doc: Sequence[TaggedToken]) -> bool:
    """True iff a preposition precedes the term with only bridgeable words between.

    The word "for" is ignored as a preposition (it is usually temporal), but it
    still counts as a bridge token when some earlier preposition applies.
    """
    for k in range(term.start - 1, -1, -1):
        token = doc[k]
        if token.pos_group is PosGroup.PREPOSITION and token.text.lower() != "for":
            return True
        if token.pos_group not in _BRIDGE_GROUPS:
            return False
    return False


def filter_terms(terms: set[Term], doc: Sequence[TaggedToken]) -> ExtractionOutcome:
    """Reduce the candidate set through the cascade and record which branch fired.

    Exactly one branch applies: terms containing an NER LOCATION word win
    outright; otherwise terms after prepositions; otherwise everything is kept.
    """
    if not terms:
        return ExtractionOutcome(frozenset(), frozenset(), FilterMode.EMPTY)

    def has_location_word(term: Term) -> bool:
        return any(doc[i].ner_tag is NerTag.LOCATION for i in range(term.start, term.end + 1))

    with_location = {t for t in terms if has_location_word(t)}
    if with_location:
        kept, mode = with_location, FilterMode.NER_LOCATIONS
    else:
        after = {t for t in terms if is_after_preposition(t, doc)}
        if after:
            kept, mode = after, FilterMode.AFTER_PREPOSITIONS
        else:
            kept, mode = set(terms), FilterMode.ALL_NOUNS
    return ExtractionOutcome(frozenset(kept), frozenset(t.phrase for t in kept), mode)


# Postal code formats, matched case-insensitively against whole 1- or 2-token
# windows (the window boundary provides the word anchoring).
_POSTAL_PATTERNS = (
    re.compile(r"[A-Z]\d[A-Z] ?\d[A-Z]\d", re.IGNORECASE),  # Canada: A1A 1A1
    re.compile(r"\d{5}(?:-\d{4})?"),  # United States: 12345 or 12345-6789
    re.compile(r"\d{4} ?[A-Z]{2}", re.IGNORECASE),  # Netherlands: 1234 AB
)


def find_postal_codes(doc: Sequence[TaggedToken]) -> set[Term]:
    """Terms for every 1- or 2-token window matching a supported postal format."""
    found: set[Term] = set()
    n = len(doc)
    for a in range(n):
        for b in (a, a + 1):
            if b >= n:
                continue
            text = " ".join(doc[i].text for i in range(a, b + 1))
            if any(p.fullmatch(text) for p in _POSTAL_PATTERNS):
                found.add(Term.from_span(doc, a, b))
    return found


def extract_terms(doc: Sequence[TaggedToken]) -> ExtractionOutcome:
    """Full extraction: candidates, filtering cascade, then postal codes.

    Postal-code terms are appended after filtering and only when their exact
    span is not already represented, so the step is idempotent. The mode keeps
    reporting the cascade branch.
    """
    outcome = filter_terms(extract_candidates(doc), doc)
    spans = {(t.start, t.end) for t in outcome.terms}
    extra = {t for t in find_postal_codes(doc) if (t.start, t.end) not in spans}
    if not extra:
        return outcome
    terms = frozenset(outcome.terms | extra)
    return ExtractionOutcome(terms, frozenset(t.phrase for t in terms), outcome.mode)
