import random

import pytest
from hypothesis import given, strategies as st

from geotagger.text_model import (
    Group,
    NerTag,
    PosGroup,
    TaggedToken,
    Term,
    compute_groups,
    conflicts,
    enforce_group_cap,
    enumerate_interpretations,
    ner_tag_for,
    pos_group_for,
)
from tests.support import (
    brute_force_groups,
    brute_force_interpretations,
    new_york_city_terms,
)


@pytest.mark.parametrize(
    "tag, group",
    [
        ("CC", PosGroup.CONJUNCTION),
        ("CD", PosGroup.ADJECTIVE),
        ("IN", PosGroup.PREPOSITION),
        ("JJ", PosGroup.ADJECTIVE),
        ("NN", PosGroup.NOUN),
        ("NNS", PosGroup.NOUN),
        ("NNP", PosGroup.NOUN),
        ("NNPS", PosGroup.NOUN),
        ("TO", PosGroup.PREPOSITION),
        ("VB", PosGroup.OTHER),
        ("DT", PosGroup.OTHER),
        (",", PosGroup.OTHER),
    ],
)
def test_pos_tag_grouping(tag, group):
    assert pos_group_for(tag) is group


@pytest.mark.parametrize(
    "raw, tag",
    [
        ("LOCATION", NerTag.LOCATION),
        ("PERSON", NerTag.PERSON),
        ("ORGANIZATION", NerTag.ORGANIZATION),
        ("O", NerTag.OTHER),
        ("MISC", NerTag.OTHER),
    ],
)
def test_ner_tag_mapping(raw, tag):
    assert ner_tag_for(raw) is tag


def test_term_from_span_joins_tokens_with_single_spaces():
    tokens = [
        TaggedToken.from_tags(0, "New", "NNP"),
        TaggedToken.from_tags(1, "York", "NNP"),
    ]
    assert Term.from_span(tokens, 0, 1).phrase == "New York"


def test_reversed_span_rejected():
    with pytest.raises(ValueError):
        Term(2, 1, "bad")


class TestConflicts:
    def test_overlapping_terms_conflict(self):
        nyc = new_york_city_terms()
        assert conflicts(nyc["York"], nyc["New York"])

    def test_disjoint_terms_do_not_conflict(self):
        nyc = new_york_city_terms()
        assert not conflicts(nyc["New"], nyc["City"])

    def test_term_does_not_conflict_with_itself(self):
        t = Term(0, 1, "New York")
        assert not conflicts(t, t)

    def test_conflict_lists_match_reference_example(self):
        nyc = new_york_city_terms()
        conflicting_with_new = {
            t.phrase for t in nyc.values() if conflicts(nyc["New"], t)
        }
        assert conflicting_with_new == {"New York", "New York City"}
        conflicting_with_york = {
            t.phrase for t in nyc.values() if conflicts(nyc["York"], t)
        }
        assert conflicting_with_york == {"New York", "York City", "New York City"}


class TestComputeGroups:
    def test_new_york_city_is_one_group(self):
        groups = compute_groups(new_york_city_terms().values())
        assert len(groups) == 1
        assert len(groups[0]) == 6
        assert groups[0].span == (0, 2)

    def test_disjoint_terms_form_singletons(self):
        terms = {Term(0, 0, "Waterloo"), Term(2, 2, "London"), Term(4, 4, "Guelph")}
        groups = compute_groups(terms)
        assert len(groups) == 3
        assert all(len(g) == 1 for g in groups)

    def test_partial_overlap_with_disjoint_extra(self):
        a, b = Term(0, 0, "A"), Term(1, 1, "B")
        ab, c = Term(0, 1, "A B"), Term(5, 5, "C")
        groups = compute_groups({a, b, ab, c})
        assert {g.members for g in groups} == brute_force_groups({a, b, ab, c})
        assert {g.members for g in groups} == {frozenset({a, b, ab}), frozenset({c})}

    def test_groups_partition_the_input(self):
        rng = random.Random(7)
        for _ in range(100):
            terms = {
                Term(s, s + rng.randint(0, 2), f"t{s}")
                for s in rng.sample(range(12), rng.randint(1, 8))
            }
            groups = compute_groups(terms)
            members = [t for g in groups for t in g.members]
            assert len(members) == len(terms)
            assert set(members) == terms
            assert {g.members for g in groups} == brute_force_groups(terms)


spans = st.tuples(st.integers(0, 9), st.integers(0, 2)).map(
    lambda p: (p[0], p[0] + p[1])
)


@given(st.sets(spans, min_size=1, max_size=8))
def test_group_closure_matches_brute_force(span_set):
    terms = {Term(s, e, f"w{s}.{e}") for s, e in span_set}
    assert {g.members for g in compute_groups(terms)} == brute_force_groups(terms)


class TestInterpretations:
    def test_new_york_city_has_exactly_four_interpretations(self):
        nyc = new_york_city_terms()
        group = compute_groups(nyc.values())[0]
        found = {frozenset(t.phrase for t in i.terms) for i in enumerate_interpretations(group)}
        assert found == {
            frozenset({"New", "York", "City"}),
            frozenset({"New York", "City"}),
            frozenset({"New", "York City"}),
            frozenset({"New York City"}),
        }

    def test_singleton_group_has_one_interpretation(self):
        t = Term(3, 3, "Guelph")
        (group,) = compute_groups({t})
        (interp,) = enumerate_interpretations(group)
        assert interp.terms == frozenset({t})

    @pytest.mark.parametrize("n", range(1, 7))
    def test_fully_populated_segment_counts(self, n):
        terms = {
            Term(a, b, f"{a}.{b}") for a in range(n) for b in range(a, n)
        }
        (group,) = compute_groups(terms)
        assert len(enumerate_interpretations(group)) == 2 ** (n - 1)

    def test_missing_word_still_yields_valid_interpretations(self):
        # "New" tagged as adjective and absent: York City alone is maximal,
        # bare York is not because City can still be added.
        nyc = new_york_city_terms()
        members = {nyc[k] for k in ("York", "City", "New York", "York City", "New York City")}
        (group,) = compute_groups(members)
        found = {frozenset(t.phrase for t in i.terms) for i in enumerate_interpretations(group)}
        assert frozenset({"York", "City"}) in found
        assert frozenset({"New York", "City"}) in found
        assert frozenset({"York City"}) in found
        assert frozenset({"York"}) not in found

    def test_matches_brute_force_on_random_groups(self):
        rng = random.Random(42)
        for _ in range(150):
            span_count = rng.randint(1, 12)
            spans_set = set()
            while len(spans_set) < span_count:
                start = rng.randrange(8)
                spans_set.add((start, min(7, start + rng.randint(0, 3))))
            terms = {Term(s, e, f"w{s}.{e}") for s, e in spans_set}
            for group in compute_groups(terms):
                found = {i.terms for i in enumerate_interpretations(group)}
                assert found == brute_force_interpretations(group.members)

    def test_every_interpretation_is_maximal_and_conflict_free(self):
        nyc = new_york_city_terms()
        (group,) = compute_groups(nyc.values())
        for interp in enumerate_interpretations(group):
            chosen = list(interp.terms)
            assert not any(
                conflicts(a, b) for i, a in enumerate(chosen) for b in chosen[i + 1 :]
            )
            for excluded in group.members - interp.terms:
                assert any(excluded.overlaps(t) for t in chosen)


class TestGroupCap:
    def test_small_groups_untouched(self):
        terms = frozenset(new_york_city_terms().values())
        assert enforce_group_cap(terms, 24) == terms

    def test_oversized_group_trimmed_by_dropping_longest_terms(self):
        n = 8  # fully populated: 36 terms in one group
        terms = {Term(a, b, f"{a}.{b}") for a in range(n) for b in range(a, n)}
        capped = enforce_group_cap(terms, 24)
        assert all(len(g) <= 24 for g in compute_groups(capped))
        # single-word terms all survive
        assert {t for t in terms if t.length == 1} <= capped
        # the longest candidate goes first
        assert Term(0, n - 1, f"0.{n - 1}") not in capped
