"""Core vocabulary of the pipeline: tagged tokens, candidate terms, conflict
groups, and interpretations.

A *term* is a contiguous token span treated as a potential location reference;
its *phrase* is the space-joined token text. Terms *conflict* when their spans
overlap, conflicting terms cluster into *groups* (the closure under overlap),
and each *interpretation* of a group is a maximal subset of mutually
non-conflicting terms. All types are immutable values and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, Sequence


class PosGroup(str, Enum):
    NOUN = "noun"
    ADJECTIVE = "adjective"
    PREPOSITION = "preposition"
    CONJUNCTION = "conjunction"
    OTHER = "other"


class NerTag(str, Enum):
    LOCATION = "LOCATION"
    PERSON = "PERSON"
    ORGANIZATION = "ORGANIZATION"
    OTHER = "OTHER"


# Penn Treebank tags the pipeline reacts to; anything else maps to OTHER.
# Cardinal numbers are grouped with adjectives so street numbers can join terms.
POS_TAG_GROUPS: dict[str, PosGroup] = {
    "CC": PosGroup.CONJUNCTION,
    "CD": PosGroup.ADJECTIVE,
    "IN": PosGroup.PREPOSITION,
    "JJ": PosGroup.ADJECTIVE,
    "NN": PosGroup.NOUN,
    "NNS": PosGroup.NOUN,
    "NNP": PosGroup.NOUN,
    "NNPS": PosGroup.NOUN,
    "TO": PosGroup.PREPOSITION,
}


def pos_group_for(pos_tag: str) -> PosGroup:
    """Map a raw part-of-speech tag to its coarse group."""
    return POS_TAG_GROUPS.get(pos_tag.upper(), PosGroup.OTHER)


def ner_tag_for(raw: str) -> NerTag:
    """Map a raw NER label to one of the four recognized tags ("O" becomes OTHER)."""
    try:
        return NerTag(raw.upper())
    except ValueError:
        return NerTag.OTHER


@dataclass(frozen=True)
class TaggedToken:
    """One word of a document with its position and coarse annotations."""

    index: int
    text: str
    pos_group: PosGroup
    ner_tag: NerTag = NerTag.OTHER

    @classmethod
    def from_tags(cls, index: int, text: str, pos_tag: str, ner_tag: str = "O") -> TaggedToken:
        return cls(index, text, pos_group_for(pos_tag), ner_tag_for(ner_tag))


@dataclass(frozen=True, order=True)
class Term:
    """A contiguous token span [start, end] with its normalized phrase key.

    Terms are occurrence-specific: the same words at two places in a document
    are two distinct terms that share one phrase.
    """

    start: int
    end: int
    phrase: str

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"term span reversed: [{self.start}, {self.end}]")

    @classmethod
    def from_span(cls, tokens: Sequence[TaggedToken], start: int, end: int) -> Term:
        phrase = " ".join(tokens[i].text for i in range(start, end + 1))
        return cls(start, end, phrase)

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def overlaps(self, other: Term) -> bool:
        return self.start <= other.end and other.start <= self.end


def conflicts(t1: Term, t2: Term) -> bool:
    """True iff the two terms are distinct and their token spans intersect."""
    return t1 != t2 and t1.overlaps(t2)


@dataclass(frozen=True)
class Group:
    """A minimal overlap-closed set of terms covering one text segment."""

    members: frozenset[Term]
    span: tuple[int, int]

    def __len__(self) -> int:
        return len(self.members)


def compute_groups(terms: Iterable[Term]) -> list[Group]:
    """Partition terms into overlap-closure groups, ordered by span start.

    Terms are intervals, so the closure groups are exactly the maximal runs of
    start-sorted terms whose spans chain together.
    """
    ordered = sorted(terms)
    groups: list[Group] = []
    run: list[Term] = []
    run_end = -1
    for term in ordered:
        if run and term.start > run_end:
            groups.append(Group(frozenset(run), (run[0].start, run_end)))
            run, run_end = [], -1
        run.append(term)
        run_end = max(run_end, term.end)
    if run:
        groups.append(Group(frozenset(run), (run[0].start, run_end)))
    return groups


@dataclass(frozen=True)
class Interpretation:
    """One reading of a group: a maximal subset of mutually non-conflicting terms."""

    terms: frozenset[Term]

    def __len__(self) -> int:
        return len(self.terms)


def enumerate_interpretations(group: Group) -> list[Interpretation]:
    """All maximal non-conflicting subsets of the group, without duplicates.

    For a fully populated n-word segment (every contiguous subsequence present
    as a term) the count is 2**(n-1).
    """
    return [Interpretation(members) for members in maximal_non_conflicting(group.members)]


@lru_cache(maxsize=4096)
def maximal_non_conflicting(members: frozenset[Term]) -> tuple[frozenset[Term], ...]:
    """Enumerate maximal independent sets of the overlap graph on `members`.

    Backtracks left to right over start-sorted terms, tracking excluded terms
    that still need to be overlapped by a later inclusion; a pending term no
    future candidate can reach prunes the branch. Each decision path yields a
    distinct set, so no deduplication is needed.
    """
    candidates = sorted(members)
    found: list[frozenset[Term]] = []

    def walk(i: int, chosen: list[Term], pending: list[Term]) -> None:
        if i == len(candidates):
            if not pending:
                found.append(frozenset(chosen))
            return
        cand = candidates[i]
        # Later candidates start at or after cand.start, so a pending term
        # ending before it can never be covered.
        if any(p.end < cand.start for p in pending):
            return
        if any(cand.overlaps(c) for c in chosen):
            walk(i + 1, chosen, pending)
            return
        chosen.append(cand)
        walk(i + 1, chosen, [p for p in pending if not p.overlaps(cand)])
        chosen.pop()
        pending.append(cand)
        walk(i + 1, chosen, pending)
        pending.pop()

    walk(0, [], [])
    return tuple(sorted(found, key=lambda s: sorted(s)))


def enforce_group_cap(terms: Iterable[Term], max_group_size: int = 24) -> frozenset[Term]:
    """Drop terms until no overlap group exceeds `max_group_size` members.

    Interpretation counts grow exponentially with group size, so oversized
    groups are trimmed by discarding their longest multi-word candidates first;
    removing a bridging term may split a group, so the closure is recomputed
    after every pass. Single-word terms are never dropped.
    """
    kept = set(terms)
    while True:
        oversized = [g for g in compute_groups(kept) if len(g) > max_group_size]
        if not oversized:
            return frozenset(kept)
        removed_any = False
        for group in oversized:
            multi = [t for t in group.members if t.length > 1]
            if not multi:
                continue
            multi.sort(key=lambda t: (-t.length, t.start, t.phrase))
            kept.discard(multi[0])
            removed_any = True
        if not removed_any:
            return frozenset(kept)
