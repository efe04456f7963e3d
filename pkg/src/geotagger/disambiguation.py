"""Distance-based disambiguation.

Given the candidate terms of a document and the gazetteer results for each
phrase, this module assigns exactly one location to every surviving phrase.
Coherence is measured through pairwise great-circle distances: for a result r
and another term t, the closeness c(r, t) is the shortest distance from r to
any candidate result of t, and eight scoring functions aggregate those
closenesses (optionally weighted to stay unbiased across the mutually
exclusive interpretations of overlapping terms). Two greedy loops consume the
scores: the 1-phase loop settles interpretations and result choices together,
the 2-phase loop removes all conflicting terms first and only then picks
results.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from .gazetteer import LocationResult
from .text_model import Group, Term, compute_groups, maximal_non_conflicting

EARTH_RADIUS_KM = 6371.0

# Floor for reciprocal denominators; keeps coincident results from dividing by zero.
MIN_DISTANCE_KM = 1e-3

DEFAULT_BUDGET_SECONDS = 100.0


class ScoringFunction(str, Enum):
    TOTAL_DISTANCE = "total-distance"
    WEIGHTED_DISTANCE = "weighted-distance"
    INVERSE = "inverse"
    WEIGHTED_INVERSE = "weighted-inverse"
    WEIGHTED_NORMALIZED_INVERSE = "weighted-normalized-inverse"
    INVERSE_FREQUENCY = "inverse-frequency"
    WEIGHTED_INVERSE_FREQUENCY = "weighted-inverse-frequency"
    WEIGHTED_NORMALIZED_INVERSE_FREQUENCY = "weighted-normalized-inverse-frequency"


class Phase(str, Enum):
    ONE_PHASE = "1phase"
    TWO_PHASE = "2phase"


#: The variant that performed best overall; used as the default everywhere.
DEFAULT_FUNCTION = ScoringFunction.WEIGHTED_INVERSE_FREQUENCY
DEFAULT_PHASE = Phase.ONE_PHASE

ALL_VARIANTS: tuple[tuple[ScoringFunction, Phase], ...] = tuple(
    (fn, phase) for fn in ScoringFunction for phase in Phase
)


def great_circle_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on a sphere with the mean Earth radius, in km.

    The arccos argument is clamped to [-1, 1] so floating-point noise on
    coincident or antipodal points cannot produce a domain error; identical
    coordinates short-circuit to exactly 0 (the formula alone leaves
    centimetre-scale rounding residue).
    """
    if lat1 == lat2 and lon1 == lon2:
        return 0.0
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    cos_angle = math.sin(phi1) * math.sin(phi2) + math.cos(phi1) * math.cos(phi2) * math.cos(
        math.radians(lon1 - lon2)
    )
    return EARTH_RADIUS_KM * math.acos(max(-1.0, min(1.0, cos_angle)))


def great_circle_distance(a: LocationResult, b: LocationResult) -> float:
    return great_circle_km(a.latitude, a.longitude, b.latitude, b.longitude)


DistanceFn = Callable[[LocationResult, LocationResult], float]


class CandidateSpace:
    """The disambiguation state: terms, per-phrase result lists, and distances.

    Result lists are shared by all terms with the same phrase. Distances are
    computed lazily and memoized per result pair; a custom distance function
    may be injected (used by tests to replay reference distance tables).
    """

    def __init__(
        self,
        terms: Iterable[Term],
        results: Mapping[str, Sequence[LocationResult]],
        distance_fn: DistanceFn = great_circle_distance,
        _cache: dict[tuple[LocationResult, LocationResult], float] | None = None,
    ):
        self.terms: set[Term] = set(terms)
        live_phrases = {t.phrase for t in self.terms}
        self.results: dict[str, tuple[LocationResult, ...]] = {
            p: tuple(rs) for p, rs in results.items() if p in live_phrases
        }
        for term in self.terms:
            if not self.results.get(term.phrase):
                raise ValueError(f"no results for phrase {term.phrase!r}")
        self._distance_fn = distance_fn
        self._cache = _cache if _cache is not None else {}

    @property
    def phrases(self) -> set[str]:
        return set(self.results)

    def copy(self) -> CandidateSpace:
        return CandidateSpace(self.terms, self.results, self._distance_fn, self._cache)

    def distance(self, r1: LocationResult, r2: LocationResult) -> float:
        if r1 == r2:
            return 0.0
        key = (r1, r2)
        cached = self._cache.get(key)
        if cached is None:
            cached = self._distance_fn(r1, r2)
            self._cache[key] = cached
            self._cache[(r2, r1)] = cached
        return cached

    def closeness_to_phrase(self, result: LocationResult, phrase: str) -> float:
        return min(self.distance(result, other) for other in self.results[phrase])

    def remove_terms(self, removed: Iterable[Term]) -> None:
        removed = set(removed)
        if not removed:
            return
        self.terms -= removed
        live = {t.phrase for t in self.terms}
        for phrase in [p for p in self.results if p not in live]:
            del self.results[phrase]

    def collapse(self, phrase: str, result: LocationResult) -> None:
        self.results[phrase] = (result,)


def closeness(
    space: CandidateSpace,
    result: LocationResult,
    term: Term,
    owner_phrase: str | None = None,
) -> float:
    """Shortest distance from `result` to any candidate result of `term`.

    Zero by definition when the term shares the phrase of the term that owns
    the result, so same-phrase occurrences never contribute distance.
    """
    if owner_phrase is not None and term.phrase == owner_phrase:
        return 0.0
    return space.closeness_to_phrase(result, term.phrase)


@dataclass(frozen=True)
class WeightTable:
    """Pairwise weights over the current term set.

    Self-weight is 1, conflicting pairs get 0, and for any other group the
    weights of its members sum to 1 (each interpretation shares 1/q equally
    among its terms). When the column term shares the row term's group without
    conflicting, the weights are recomputed as if the row term's conflicts had
    been deleted from the document.
    """

    rows: dict[Term, dict[Term, float]]
    conflicted: frozenset[Term]

    def weight(self, t1: Term, t2: Term) -> float:
        return self.rows[t1][t2]

    @property
    def has_conflicts(self) -> bool:
        return bool(self.conflicted)


def _interpretation_weights(members: frozenset[Term]) -> dict[Term, float]:
    interpretations = maximal_non_conflicting(members)
    q = len(interpretations)
    weights = {t: 0.0 for t in members}
    for interp in interpretations:
        share = 1.0 / (q * len(interp))
        for term in interp:
            weights[term] += share
    return weights


def compute_weights(terms: Iterable[Term]) -> WeightTable:
    terms = set(terms)
    groups = compute_groups(terms)
    group_of: dict[Term, Group] = {t: g for g in groups for t in g.members}
    base = {g: _interpretation_weights(g.members) for g in groups}
    conflicted = frozenset(t for g in groups if len(g) > 1 for t in g.members)

    rows: dict[Term, dict[Term, float]] = {}
    for t1 in terms:
        own_group = group_of[t1]
        row: dict[Term, float] = {}
        for group in groups:
            if group is not own_group:
                row.update(base[group])
        row[t1] = 1.0
        if len(own_group) > 1:
            in_conflict = {t for t in own_group.members if t != t1 and t1.overlaps(t)}
            for term in in_conflict:
                row[term] = 0.0
            survivors = own_group.members - {t1} - in_conflict
            if survivors:
                for subgroup in compute_groups(survivors):
                    row.update(_interpretation_weights(subgroup.members))
        rows[t1] = row
    return WeightTable(rows, conflicted)


class Scorer:
    """Scores (term, result) pairs for one iteration of a greedy loop.

    `weights=None` means all weights are 1 (used in the second phase of the
    2-phase loop and for final ranking, where no conflicts remain).
    """

    def __init__(
        self,
        space: CandidateSpace,
        weights: WeightTable | None,
        function: ScoringFunction,
    ):
        self._space = space
        self._weights = weights
        self._function = function
        self._closeness: dict[tuple[LocationResult, str], float] = {}
        self._phrase_floor: dict[tuple[str, str], float] = {}

    def _c(self, result: LocationResult, phrase: str) -> float:
        key = (result, phrase)
        value = self._closeness.get(key)
        if value is None:
            value = self._space.closeness_to_phrase(result, phrase)
            self._closeness[key] = value
        return value

    def _floor(self, p1: str, p2: str) -> float:
        # min over candidate results of p1 of the clamped closeness to p2;
        # clamping commutes with the min, so clamp once at the end.
        key = (p1, p2)
        value = self._phrase_floor.get(key)
        if value is None:
            value = max(
                min(self._c(r, p2) for r in self._space.results[p1]),
                MIN_DISTANCE_KM,
            )
            self._phrase_floor[key] = value
        return value

    def _w(self, t1: Term, t2: Term) -> float:
        return 1.0 if self._weights is None else self._weights.weight(t1, t2)

    def score(self, t1: Term, r1: LocationResult) -> float:
        fn = self._function
        p1 = t1.phrase

        if fn in (ScoringFunction.TOTAL_DISTANCE, ScoringFunction.WEIGHTED_DISTANCE):
            total = 0.0
            for t2 in self._space.terms:
                if t2.phrase == p1:
                    continue  # same-phrase closeness is 0 by definition
                w = self._w(t1, t2)
                if w == 0.0:
                    continue
                c = self._c(r1, t2.phrase)
                total += c if fn is ScoringFunction.TOTAL_DISTANCE else w * c
            return -total

        inverse_sum = 0.0
        weighted_inverse = 0.0
        normalized_numerator = 0.0
        other_weight = 0.0
        same_count = 0
        same_weight = 0.0
        for t2 in self._space.terms:
            if t2.phrase == p1:
                same_count += 1
                same_weight += self._w(t1, t2)
                continue
            w = self._w(t1, t2)
            if w == 0.0:
                continue
            c = max(self._c(r1, t2.phrase), MIN_DISTANCE_KM)
            if fn in (ScoringFunction.INVERSE, ScoringFunction.INVERSE_FREQUENCY):
                inverse_sum += 1.0 / c
            elif fn in (
                ScoringFunction.WEIGHTED_INVERSE,
                ScoringFunction.WEIGHTED_INVERSE_FREQUENCY,
            ):
                weighted_inverse += w / c
            else:
                normalized_numerator += w * self._floor(p1, t2.phrase) / c
                other_weight += w

        if fn is ScoringFunction.INVERSE:
            return inverse_sum
        if fn is ScoringFunction.INVERSE_FREQUENCY:
            return inverse_sum * same_count
        if fn is ScoringFunction.WEIGHTED_INVERSE:
            return weighted_inverse
        if fn is ScoringFunction.WEIGHTED_INVERSE_FREQUENCY:
            return weighted_inverse * same_weight
        # An empty sum (no other phrases) would be 0/0; the result is defined
        # as the perfect score 1.
        normalized = 1.0 if other_weight == 0.0 else normalized_numerator / other_weight
        if fn is ScoringFunction.WEIGHTED_NORMALIZED_INVERSE:
            return normalized
        return normalized * same_weight


@dataclass(frozen=True)
class GeoTag:
    """One output record: a term span resolved to a location with a final score."""

    start: int
    end: int
    phrase: str
    result: LocationResult
    score: float
    rank: int


@dataclass(frozen=True)
class Assignment:
    """Outcome of a disambiguation run over one document."""

    chosen: dict[str, LocationResult]
    surviving_terms: frozenset[Term]
    ranked: tuple[GeoTag, ...]
    budget_exhausted: bool = False
    iterations: int = 0
    #: (phrase, result, score) per greedy selection, in order.
    selections: tuple[tuple[str, LocationResult, float], ...] = field(default=())


def _select_best(
    space: CandidateSpace, scorer: Scorer, candidates: Iterable[Term]
) -> tuple[Term, LocationResult, float]:
    """Argmax of the score over (term, result) pairs.

    Ties break by higher gazetteer importance, then lexicographically smaller
    phrase, then smaller source id, then smaller span start, so runs are
    reproducible.
    """
    best: tuple[Term, LocationResult, float] | None = None
    for term in sorted(candidates):
        for result in space.results[term.phrase]:
            score = scorer.score(term, result)
            if best is None or _beats(score, result, term, best):
                best = (term, result, score)
    assert best is not None, "argmax over empty candidate set"
    return best


def _beats(
    score: float, result: LocationResult, term: Term, best: tuple[Term, LocationResult, float]
) -> bool:
    best_term, best_result, best_score = best
    if score != best_score:
        return score > best_score
    if result.importance != best_result.importance:
        return result.importance > best_result.importance
    if term.phrase != best_term.phrase:
        return term.phrase < best_term.phrase
    if result.source_id != best_result.source_id:
        return result.source_id < best_result.source_id
    return term.start < best_term.start


def _needs_disambiguation(space: CandidateSpace, weights: WeightTable, term: Term) -> bool:
    return len(space.results[term.phrase]) > 1 or term in weights.conflicted


def _finalize_by_importance(space: CandidateSpace) -> None:
    """Budget-cutoff fallback: settle everything left by gazetteer importance.

    Each still-conflicted group keeps its single term whose best result is the
    most important; every multi-result phrase collapses to its most important
    result. The output stays valid (conflict-free, results from the original
    lists) but is flagged by the caller.
    """
    for group in compute_groups(space.terms):
        if len(group) == 1:
            continue
        keep = min(
            group.members,
            key=lambda t: (
                -max(r.importance for r in space.results[t.phrase]),
                t.phrase,
                t.start,
            ),
        )
        space.remove_terms(group.members - {keep})
    for phrase, results in list(space.results.items()):
        if len(results) > 1:
            best = min(results, key=lambda r: (-r.importance, r.source_id))
            space.collapse(phrase, best)


def _ranked_tags(
    terms: Iterable[Term],
    chosen: Mapping[str, LocationResult],
    function: ScoringFunction,
    space: CandidateSpace,
) -> tuple[GeoTag, ...]:
    """Recompute final scores over the settled assignment and rank descending.

    All result lists are singletons and all weights are 1 at this point, so
    each phrase has one well-defined score. Ties break by importance, then by
    phrase.
    """
    terms = set(terms)
    if not terms:
        return ()
    final_space = CandidateSpace(
        terms, {p: (r,) for p, r in chosen.items()}, distance_fn=space.distance
    )
    scorer = Scorer(final_space, None, function)
    representative = {}
    for term in sorted(terms):
        representative.setdefault(term.phrase, term)
    scored = [
        (phrase, chosen[phrase], scorer.score(term, chosen[phrase]))
        for phrase, term in representative.items()
    ]
    scored.sort(key=lambda row: (-row[2], -row[1].importance, row[0]))
    return tuple(
        GeoTag(
            start=representative[phrase].start,
            end=representative[phrase].end,
            phrase=phrase,
            result=result,
            score=score,
            rank=rank,
        )
        for rank, (phrase, result, score) in enumerate(scored, start=1)
    )


def rank_results(
    assignment: Assignment, space: CandidateSpace, function: ScoringFunction
) -> tuple[GeoTag, ...]:
    """Final ranking of a completed assignment (recomputable standalone)."""
    return _ranked_tags(assignment.surviving_terms, assignment.chosen, function, space)


def disambiguate_1phase(
    space: CandidateSpace,
    function: ScoringFunction = DEFAULT_FUNCTION,
    budget_seconds: float | None = DEFAULT_BUDGET_SECONDS,
) -> Assignment:
    """Greedy loop resolving interpretations and result choices together.

    While any phrase has several results or any terms conflict: score every
    result of every term still needing disambiguation, take the best-scoring
    (term, result) pair, make that result the phrase's only candidate, delete
    the terms conflicting with the winner, and refresh phrases and weights.
    Exhausting the time budget finalizes the remainder by importance and flags
    the assignment instead of failing.
    """
    work = space.copy()
    deadline = None if budget_seconds is None else time.monotonic() + budget_seconds
    weights = compute_weights(work.terms)
    selections: list[tuple[str, LocationResult, float]] = []
    iterations = 0
    exhausted = False

    while weights.has_conflicts or any(len(rs) > 1 for rs in work.results.values()):
        if deadline is not None and time.monotonic() >= deadline:
            exhausted = True
            break
        iterations += 1
        needing = [t for t in work.terms if _needs_disambiguation(work, weights, t)]
        scorer = Scorer(work, weights, function)
        term, result, score = _select_best(work, scorer, needing)
        selections.append((term.phrase, result, score))
        work.collapse(term.phrase, result)
        work.remove_terms({t for t in work.terms if weights.weight(term, t) == 0.0})
        weights = compute_weights(work.terms)

    if exhausted:
        _finalize_by_importance(work)
    chosen = {phrase: results[0] for phrase, results in work.results.items()}
    ranked = _ranked_tags(work.terms, chosen, function, space)
    return Assignment(
        chosen=chosen,
        surviving_terms=frozenset(work.terms),
        ranked=ranked,
        budget_exhausted=exhausted,
        iterations=iterations,
        selections=tuple(selections),
    )


def disambiguate_2phase(
    space: CandidateSpace,
    function: ScoringFunction = DEFAULT_FUNCTION,
    budget_seconds: float | None = DEFAULT_BUDGET_SECONDS,
) -> Assignment:
    """Greedy loop resolving all conflicts first, then picking results.

    Phase one repeatedly selects the best-scoring result among conflicted
    terms and deletes the terms conflicting with the winner; result lists are
    not collapsed. Phase two then collapses multi-result phrases by score with
    all weights equal to 1.
    """
    work = space.copy()
    deadline = None if budget_seconds is None else time.monotonic() + budget_seconds
    weights = compute_weights(work.terms)
    selections: list[tuple[str, LocationResult, float]] = []
    iterations = 0
    exhausted = False

    while weights.has_conflicts:
        if deadline is not None and time.monotonic() >= deadline:
            exhausted = True
            break
        iterations += 1
        needing = [t for t in work.terms if t in weights.conflicted]
        scorer = Scorer(work, weights, function)
        term, result, score = _select_best(work, scorer, needing)
        selections.append((term.phrase, result, score))
        work.remove_terms({t for t in work.terms if weights.weight(term, t) == 0.0})
        weights = compute_weights(work.terms)

    while not exhausted and any(len(rs) > 1 for rs in work.results.values()):
        if deadline is not None and time.monotonic() >= deadline:
            exhausted = True
            break
        iterations += 1
        needing = [t for t in work.terms if len(work.results[t.phrase]) > 1]
        scorer = Scorer(work, None, function)
        term, result, score = _select_best(work, scorer, needing)
        selections.append((term.phrase, result, score))
        work.collapse(term.phrase, result)

    if exhausted:
        _finalize_by_importance(work)
    chosen = {phrase: results[0] for phrase, results in work.results.items()}
    ranked = _ranked_tags(work.terms, chosen, function, space)
    return Assignment(
        chosen=chosen,
        surviving_terms=frozenset(work.terms),
        ranked=ranked,
        budget_exhausted=exhausted,
        iterations=iterations,
        selections=tuple(selections),
    )


def disambiguate(
    space: CandidateSpace,
    function: ScoringFunction = DEFAULT_FUNCTION,
    phase: Phase = DEFAULT_PHASE,
    budget_seconds: float | None = DEFAULT_BUDGET_SECONDS,
) -> Assignment:
    if phase is Phase.ONE_PHASE:
        return disambiguate_1phase(space, function, budget_seconds)
    return disambiguate_2phase(space, function, budget_seconds)
