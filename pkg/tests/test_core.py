from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrforge.core import (
    AttributedResponse,
    Document,
    DocumentSet,
    Statement,
    build_response,
    parse_response,
    render_response,
    render_statement,
    segment,
    strip_citations,
)

from .strategies import attributed_responses, raw_responses


def test_two_statements_with_citations():
    r = parse_response("Paris is the capital [1][3]. It has museums [2].", 3)
    assert [s.citations for s in r.statements] == [(1, 3), (2,)]
    assert [s.text for s in r.statements] == ["Paris is the capital.", "It has museums."]


def test_no_markers():
    r = parse_response("The sky is blue.", 5)
    assert len(r.statements) == 1
    assert r.statements[0].citations == ()


def test_out_of_range_marker_is_invalid():
    (s,) = parse_response("Cited badly [7].", 5).statements
    assert s.citations == ()
    assert s.invalid_citations == (7,)


def test_zero_is_never_a_valid_index():
    (s,) = parse_response("Zero [0][1].", 2).statements
    assert s.citations == (1,)
    assert s.invalid_citations == (0,)


def test_unsupported_marker_forms_stay_literal():
    (s,) = parse_response("Ranges [1-3] and lists [1,2] and [abc] stay.", 3).statements
    assert s.citations == ()
    assert "[1-3]" in s.text and "[1,2]" in s.text and "[abc]" in s.text


def test_duplicate_and_unordered_markers_normalised():
    (s,) = parse_response("Fact [3][1][3].", 3).statements
    assert s.citations == (1, 3)


def test_marker_after_punctuation_attaches_to_previous_sentence():
    r = parse_response("One fact. [1] Another fact [2].", 2)
    assert [s.citations for s in r.statements] == [(1,), (2,)]


def test_abbreviations_do_not_split():
    r = parse_response("Fruits, e.g. apples, are sweet [1]. Mr. Smith agrees.", 1)
    assert len(r.statements) == 2
    r = parse_response("Bananas, apples, etc. are fruit. Pears too.", 0)
    assert len(r.statements) == 2


def test_soft_abbreviation_splits_before_capital():
    r = parse_response("They sell apples, pears, etc. The shop opens at nine.", 0)
    assert len(r.statements) == 2


def test_decimals_do_not_split():
    r = parse_response("Pi is about 3.14 in value. Yes.", 0)
    assert [s.text for s in r.statements] == ["Pi is about 3.14 in value.", "Yes."]


def test_no_dot_is_not_an_abbreviation():
    r = parse_response("No. Curiosity outlasted it.", 0)
    assert [s.text for s in r.statements] == ["No.", "Curiosity outlasted it."]


def test_render_places_markers_before_punctuation():
    assert render_statement("Paris is the capital", [3, 1]) == "Paris is the capital [1][3]."
    assert render_statement("Is it?", [2]) == "Is it [2]?"
    assert render_statement("No markers.", []) == "No markers."


def test_strip_citations_examples():
    assert strip_citations("A fact [1][2].") == "A fact."
    assert strip_citations("No markers here.") == "No markers here."
    assert strip_citations("Mixed [1] middle [2].") == "Mixed middle."


def test_statement_invariants():
    s = Statement("x", citations=(2, 1, 2))
    assert s.citations == (1, 2)
    with pytest.raises(ValueError):
        Statement("x", citations=(1,), invalid_citations=(1,))


def test_document_set_validation():
    a = Document("a", "T", "body")
    with pytest.raises(ValueError):
        DocumentSet([a, Document("a", "U", "other")])
    with pytest.raises(ValueError):
        Document("", "T", "body")
    with pytest.raises(ValueError):
        Document("b", "T", "")
    ds = DocumentSet([a, Document("b", "T", "b body")])
    assert ds.cite(2).doc_id == "b"
    assert ds.index_of("b") == 2
    assert not ds.resolves(0) and not ds.resolves(3)
    with pytest.raises(IndexError):
        ds.cite(3)


def test_response_dict_round_trip():
    r = parse_response("A [1]. B [9].", 2)
    assert AttributedResponse.from_dict(r.to_dict()) == r


def test_negative_doc_count_rejected():
    with pytest.raises(ValueError):
        parse_response("x", -1)


def test_build_response_renders_then_parses():
    r = build_response([("Alpha", [2]), ("Beta.", [])], 2)
    assert r.structure() == [("Alpha.", (2,), ()), ("Beta.", (), ())]


@settings(max_examples=500)
@given(raw_responses(), st.integers(0, 6))
def test_parse_is_total_and_indices_are_safe(raw, n):
    r = parse_response(raw, n)
    for s in r.statements:
        assert all(1 <= k <= n for k in s.citations)
        assert all(not 1 <= k <= n for k in s.invalid_citations)
    if raw.strip():
        assert r.statements


@settings(max_examples=500)
@given(raw_responses(), st.integers(0, 6))
def test_spans_cover_all_non_whitespace(raw, n):
    r = parse_response(raw, n)
    covered = set()
    for s in r.statements:
        a, b = s.char_span
        covered.update(range(a, b))
    assert all(i in covered for i, ch in enumerate(raw) if not ch.isspace())
    spans = [s.char_span for s in r.statements]
    assert spans == sorted(spans)
    assert [(a, b) for a, b in segment(raw)] == spans


@settings(max_examples=500)
@given(raw_responses(), st.integers(0, 6))
def test_render_parse_round_trip_on_parsed_text(raw, n):
    r = parse_response(raw, n)
    assert parse_response(render_response(r), n).structure() == r.structure()


@settings(max_examples=300)
@given(attributed_responses())
def test_parse_render_round_trip_on_built_responses(pair):
    resp, n = pair
    assert parse_response(render_response(resp), n).structure() == resp.structure()
