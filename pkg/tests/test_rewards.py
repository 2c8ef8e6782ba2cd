from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrforge.core import Document, DocumentSet, parse_response
from attrforge.gateway import Judge, LogprobRequest, LogprobResult, MockJudge, MockScorer, Scorer
from attrforge.prompts import PromptBook
from attrforge.rewards import (
    JudgeError,
    RewardBreakdown,
    RewardConfig,
    attr_score,
    breakdown,
    compre_score,
    holistic_reward,
    robust_score,
)

DOCS = DocumentSet(
    [
        Document("d1", "Mars", "The rover landed on Mars in 2012."),
        Document("d2", "Moons", "Mars has two small moons named Phobos and Deimos."),
        Document("d3", "Cake", "Flour, sugar and eggs make a sponge cake."),
    ]
)


class ContextScorer(Scorer):
    """Returns a fixed log-probability per context."""

    def __init__(self, table):
        self.table = table

    def _logprob(self, req: LogprobRequest) -> LogprobResult:
        return LogprobResult(self.table[req.context], 1)


class FailingJudge(Judge):
    def _score(self, premise, hypothesis):
        raise ValueError("judge exploded")


def test_attr_two_of_three():
    resp = parse_response("The rover landed in 2012 [1]. Mars has two moons [2]. Mars has cake [1].", 3)
    assert abs(attr_score(resp, DOCS, MockJudge()) - 2 / 3) <= 1e-12


def test_attr_all_entailed_and_uncited():
    assert attr_score(parse_response("The rover landed in 2012 [1]. Phobos is small [2].", 3), DOCS, MockJudge()) == 1.0
    assert attr_score(parse_response("The rover landed in 2012.", 3), DOCS, MockJudge()) == 0.0


def test_attr_invalid_citation_contributes_zero():
    resp = parse_response("The rover landed in 2012 [7].", 3)
    assert attr_score(resp, DOCS, MockJudge()) == 0.0


def test_attr_order_of_citations_in_raw_text_is_irrelevant():
    a = parse_response("Mars rover landed 2012, moons Phobos [2][1].", 3)
    b = parse_response("Mars rover landed 2012, moons Phobos [1][2].", 3)
    assert attr_score(a, DOCS, MockJudge()) == attr_score(b, DOCS, MockJudge()) == 1.0


def test_judge_error_carries_statement_index():
    resp = parse_response("A [1]. B [2].", 3)
    with pytest.raises(JudgeError) as info:
        attr_score(resp, DOCS, FailingJudge())
    assert info.value.index == 0


def test_robust_identity_is_exactly_one():
    lr, ratio = robust_score("anything", "q", DOCS, DOCS.ids(), MockScorer())
    assert (lr, ratio) == (0.0, 1.0)


def test_robust_ratio_e_squared():
    pb = PromptBook()
    rel = [d for d in DOCS if d.doc_id in ("d1", "d2")]
    scorer = ContextScorer({pb.context("q", rel): -10.0, pb.context("q", DOCS): -12.0})
    lr, ratio = robust_score("y", "q", DOCS, {"d1", "d2"}, scorer)
    assert lr == 2.0
    assert ratio == pytest.approx(math.e**2, rel=1e-12)
    assert round(ratio, 4) == 7.3891


def test_robust_swapping_contexts_negates():
    pb = PromptBook()
    rel = [d for d in DOCS if d.doc_id == "d1"]
    table = {pb.context("q", rel): -10.0, pb.context("q", DOCS): -12.0}
    swapped = {pb.context("q", rel): -12.0, pb.context("q", DOCS): -10.0}
    a, _ = robust_score("y", "q", DOCS, {"d1"}, ContextScorer(table))
    b, _ = robust_score("y", "q", DOCS, {"d1"}, ContextScorer(swapped))
    assert a == -b


def test_robust_rejects_unknown_ids():
    with pytest.raises(ValueError):
        robust_score("y", "q", DOCS, {"nope"}, MockScorer())


def test_compre_three_of_four():
    claims = ["The rover landed.", "Mars has moons.", "Phobos and Deimos.", "Venus is hot."]
    y = "The rover landed on Mars [1]. Mars has moons Phobos and Deimos [2]."
    assert abs(compre_score(claims, y, MockJudge()) - 0.75) <= 1e-12


def test_compre_concatenation_and_empty():
    claims = ["The rover landed.", "Mars has moons."]
    assert compre_score(claims, " ".join(claims), MockJudge()) == 1.0
    with pytest.raises(ValueError):
        compre_score(claims, "  [1]", MockJudge())
    with pytest.raises(ValueError):
        compre_score([], "text", MockJudge())


def test_holistic_examples():
    assert holistic_reward(breakdown(0.9, 5.0, 1.0)) == 0.0
    assert abs(holistic_reward(breakdown(1.0, math.log(2.0), 0.8)) - 0.4) <= 1e-12
    for mode in ("literal", "deviation_penalty"):
        assert holistic_reward(breakdown(1.0, 0.0, 0.8), RewardConfig(robust_mode=mode)) == 0.8


def test_holistic_survives_exp_underflow():
    # exp(-800) underflows to 0; the literal quotient must not divide by it
    h = holistic_reward(breakdown(1.0, -700.0, 0.9))
    assert math.isfinite(h) and h > 0
    assert breakdown(1.0, -800.0, 0.9).robust_score == 0.0
    assert 0 < holistic_reward(breakdown(1.0, -800.0, 0.9)) < math.inf
    assert holistic_reward(breakdown(1.0, 1e4, 0.9)) == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(compre_threshold=1.5)
    with pytest.raises(ValueError):
        RewardConfig(robust_mode="other")


def test_breakdown_round_trip():
    b = breakdown(1.0, -0.5, 0.9)
    assert RewardBreakdown.from_dict(b.to_dict()) == b


unit = st.floats(0, 1)
log_ratios = st.floats(-30, 30)


@settings(max_examples=500)
@given(unit, log_ratios, unit, st.sampled_from(["literal", "deviation_penalty"]))
def test_gating_biconditional(attr, lr, compre, mode):
    h = breakdown(attr, lr, compre, RewardConfig(robust_mode=mode)).holistic
    assert h >= 0 and math.isfinite(h)
    assert (h == 0) == (attr < 1 or compre == 0)


@settings(max_examples=300)
@given(log_ratios, st.floats(0.01, 1))
def test_deviation_penalty_peaks_at_ratio_one(lr, compre):
    cfg = RewardConfig(robust_mode="deviation_penalty")
    assert breakdown(1.0, lr, compre, cfg).holistic <= breakdown(1.0, 0.0, compre, cfg).holistic


def test_adding_entailing_document_never_lowers_attr():
    before = parse_response("Phobos and Deimos are moons of Mars [3].", 3)
    after = parse_response("Phobos and Deimos are moons of Mars [2][3].", 3)
    assert attr_score(before, DOCS, MockJudge()) == 0.0
    assert attr_score(after, DOCS, MockJudge()) == 1.0
