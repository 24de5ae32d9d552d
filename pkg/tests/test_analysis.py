import random

import pytest

import helpers
from ldcost.analysis import (
    InvalidOrder,
    NotAnswerable,
    build_resolution_groups,
    check_answerability,
    detect_star_joins,
    filter_affected_nrvs,
    find_nrvs,
    render_service_form,
    traversal_steps,
)
from ldcost.query import Term, parse_query


def order_of(text):
    q = parse_query(text)
    report = check_answerability(q)
    assert report.answerable, text
    return q, report


class TestCheckAnswerability:
    def test_plato_evaluable_as_written(self):
        q, report = order_of(helpers.PLATO_QUERY)
        assert report.order == (0, 1)
        assert report.reordered_from_original is False

    def test_all_variable_query_not_answerable(self):
        q = parse_query(helpers.ISURI_QUERY)
        report = check_answerability(q)
        assert report.answerable is False
        assert report.failure_witness == frozenset({0})
        assert report.order is None

    def test_reordering_when_anchor_comes_second(self):
        q = parse_query("SELECT * WHERE { ?x <http://x/p> ?y . <http://x/s> <http://x/q> ?x }")
        report = check_answerability(q)
        assert report.answerable
        assert report.order == (1, 0)
        assert report.reordered_from_original is True

    def test_variable_predicate_binds_but_never_anchors(self):
        # the bound predicate variable may anchor a later triple
        q = parse_query("SELECT * WHERE { <http://x/s> ?p ?o . ?p <http://x/domain> ?d }")
        report = check_answerability(q)
        assert report.answerable and report.order == (0, 1)
        # ... but an IRI in predicate position anchors nothing
        q2 = parse_query("SELECT * WHERE { ?s <http://x/p> ?o }")
        assert check_answerability(q2).answerable is False

    def test_blank_nodes_never_anchor(self):
        q = parse_query("SELECT * WHERE { _:b <http://x/p> ?o }")
        assert check_answerability(q).answerable is False

    def test_literal_objects_never_anchor(self):
        q = parse_query('SELECT * WHERE { ?s <http://x/p> "x" }')
        assert check_answerability(q).answerable is False

    def test_partial_witness(self):
        q = parse_query(
            "SELECT * WHERE { <http://x/s> <http://x/p> ?a . ?b <http://x/q> ?c }"
        )
        report = check_answerability(q)
        assert not report.answerable
        assert report.failure_witness == frozenset({1})

    def test_anchoring_soundness_on_generated_queries(self):
        rng = random.Random(77)
        for _ in range(150):
            q = parse_query(helpers.random_answerable_query(rng))
            report = check_answerability(q)
            assert report.answerable
            # replaying the order must find an anchor at every step
            traversal_steps(q, report.order)

    def test_stability_identity_order_kept(self):
        rng = random.Random(78)
        for _ in range(100):
            q = parse_query(helpers.random_answerable_query(rng))
            report = check_answerability(q)
            if not report.reordered_from_original:
                assert report.order == tuple(range(len(q.triples)))

    def test_adding_constant_subject_triple_keeps_answerable(self):
        rng = random.Random(79)
        for _ in range(60):
            text = helpers.random_answerable_query(rng)
            q = parse_query(text)
            assert check_answerability(q).answerable
            extended = text.rstrip().rstrip("}") + "\n  <http://x/extra> <http://x/p> ?fresh99 .\n}"
            q2 = parse_query(extended)
            assert check_answerability(q2).answerable


class TestFindNrvs:
    def test_author_publication_chain(self):
        q, report = order_of(helpers.AUTHOR_CHAIN_QUERY)
        nrvs = find_nrvs(q, report.order)
        assert [n.variable for n in nrvs] == ["author", "publication"]
        author, publication = nrvs
        assert author.binding_triple == 0
        assert author.consumer_triples == (1,)
        assert publication.consumer_triples == (2,)

    def test_single_anchor_query_has_none(self):
        q, report = order_of(helpers.MANDELA_QUERY)
        assert find_nrvs(q, report.order) == []

    def test_no_variable_feeds_another(self):
        q, report = order_of("SELECT * WHERE { ?s <http://x/p> <http://x/o> }")
        assert find_nrvs(q, report.order) == []

    def test_invalid_order_rejected(self):
        q = parse_query(helpers.PLATO_QUERY)
        with pytest.raises(InvalidOrder):
            find_nrvs(q, (1, 0))
        with pytest.raises(InvalidOrder):
            find_nrvs(q, (0,))

    def test_star_and_filter_flags_populated(self):
        q, report = order_of(helpers.BIRTHDATE_FILTER_QUERY)
        nrvs = {n.variable: n for n in find_nrvs(q, report.order)}
        assert nrvs["author"].star_triples == (1,)
        assert nrvs["author"].filter_affected is True
        assert nrvs["publication"].star_triples == ()
        assert nrvs["publication"].filter_affected is False


class TestDetectStarJoins:
    def test_director_star(self):
        q, report = order_of(helpers.DIRECTOR_STAR_QUERY)
        assert detect_star_joins(q, report.order) == {"author": {1}}

    def test_chain_form_earns_no_star(self):
        q, report = order_of(helpers.PARTY_CHAIN_QUERY)
        assert detect_star_joins(q, report.order) == {}

    def test_two_triple_query_empty(self):
        q, report = order_of(helpers.PLATO_QUERY)
        assert detect_star_joins(q, report.order) == {}

    def test_filtered_triple_excluded(self):
        q, report = order_of(helpers.BIRTHDATE_FILTER_QUERY)
        assert detect_star_joins(q, report.order) == {"author": {1}}


class TestFilterAffectedNrvs:
    def test_birthdate_filter_narrows_author(self):
        q, report = order_of(helpers.BIRTHDATE_FILTER_QUERY)
        nrvs = find_nrvs(q, report.order)
        assert filter_affected_nrvs(q, report.order, nrvs) == {"author"}

    def test_trailing_filter_affects_nothing(self):
        q, report = order_of(
            """
            PREFIX : <http://example.org/>
            SELECT * WHERE {
              ?author a :Author .
              ?author :directorOf ?institution .
              ?author :hasPublication ?publication .
              ?publication :inVenue ?venue .
              ?author :birthDate ?birthDate FILTER(year(?birthDate)>1985)
            }
            """
        )
        nrvs = find_nrvs(q, report.order)
        assert filter_affected_nrvs(q, report.order, nrvs) == set()

    def test_no_filters(self):
        q, report = order_of(helpers.AUTHOR_CHAIN_QUERY)
        assert filter_affected_nrvs(q, report.order, find_nrvs(q, report.order)) == set()


class TestBuildResolutionGroups:
    def test_star_query_groups(self):
        q, report = order_of(helpers.DIRECTOR_STAR_QUERY)
        groups = build_resolution_groups(q, report.order)
        assert [(g.label, g.triple_indices, g.ended_by_filter) for g in groups] == [
            ("constant", (0,), False),
            ("author", (1, 2), False),
            ("publication", (3,), False),
        ]

    def test_filter_splits_author_pass(self):
        q, report = order_of(helpers.BIRTHDATE_FILTER_QUERY)
        groups = build_resolution_groups(q, report.order)
        assert [(g.label, g.triple_indices, g.ended_by_filter) for g in groups] == [
            ("constant", (0,), False),
            ("author", (1, 2), True),
            ("author", (3,), False),
            ("publication", (4,), False),
        ]

    def test_single_triple(self):
        q, report = order_of(helpers.MANDELA_QUERY)
        groups = build_resolution_groups(q, report.order)
        assert [(g.label, g.triple_indices) for g in groups] == [("constant", (0,))]

    def test_groups_partition_the_order(self):
        rng = random.Random(80)
        for _ in range(120):
            q = parse_query(helpers.random_answerable_query(rng))
            report = check_answerability(q)
            groups = build_resolution_groups(q, report.order)
            flattened = [i for g in groups for i in g.triple_indices]
            assert tuple(flattened) == report.order

    def test_consecutive_constants_merge(self):
        q, report = order_of(
            "SELECT * WHERE { <http://x/a> <http://x/p> ?x . <http://x/b> <http://x/p> ?y }"
        )
        groups = build_resolution_groups(q, report.order)
        assert len(groups) == 1 and groups[0].is_constant


class TestRenderServiceForm:
    def test_plato_two_blocks(self):
        q, report = order_of(helpers.PLATO_QUERY)
        text = render_service_form(q, report.order)
        assert text.count("SERVICE") == 2
        assert "SERVICE dbr:Plato" in text
        assert "SERVICE ?influencer" in text

    def test_mandela_single_block(self):
        q, report = order_of(helpers.MANDELA_QUERY)
        text = render_service_form(q, report.order)
        assert text.count("SERVICE") == 1

    def test_filter_query_four_blocks_matching_groups(self):
        q, report = order_of(helpers.BIRTHDATE_FILTER_QUERY)
        text = render_service_form(q, report.order)
        assert text.count("SERVICE") == 4
        # re-parsing the service form yields the same resolution structure
        q2 = parse_query(text)
        report2 = check_answerability(q2)
        groups2 = build_resolution_groups(q2, report2.order)
        labels = [g.label for g in groups2]
        assert labels == ["constant", "author", "author", "publication"]

    def test_not_answerable_raises(self):
        q = parse_query(helpers.ISURI_QUERY)
        with pytest.raises(NotAnswerable):
            render_service_form(q, (0,))

    def test_round_trips_through_parser(self):
        rng = random.Random(81)
        for _ in range(60):
            q = parse_query(helpers.random_answerable_query(rng))
            report = check_answerability(q)
            text = render_service_form(q, report.order)
            q2 = parse_query(text)
            assert len(q2.triples) == len(q.triples)
            assert len(q2.service_groups) >= 1


class TestNrvConsistency:
    def test_consumer_anchor_is_the_nrv(self):
        rng = random.Random(82)
        for _ in range(100):
            q = parse_query(helpers.random_answerable_query(rng))
            report = check_answerability(q)
            steps = {s.index: s for s in traversal_steps(q, report.order)}
            for nrv in find_nrvs(q, report.order):
                for consumer in nrv.consumer_triples:
                    step = steps[consumer]
                    assert step.anchor_kind == "variable"
                    assert step.anchor_term == Term.var(nrv.variable)
