"""Score candidate answers with the attribution, robustness and coverage rewards."""

from __future__ import annotations

from attrforge.core import Document, DocumentSet, parse_response
from attrforge.gateway import MockJudge, MockScorer
from attrforge.rewards import RewardConfig, attr_score, breakdown, compre_score, robust_score

docs = DocumentSet(
    [
        Document("d1", "Mars", "The rover landed on Mars in 2012."),
        Document("d2", "Moons", "Mars has two small moons named Phobos and Deimos."),
        Document("d3", "Cake", "Flour, sugar and eggs make a sponge cake."),
    ]
)
claims = ["The rover landed.", "Mars has moons.", "Phobos and Deimos.", "Venus is hot."]
judge, scorer = MockJudge(), MockScorer()

answer = "The rover landed in 2012 [1]. Mars has two moons [2]. Mars has cake [1]."
attr = attr_score(parse_response(answer, len(docs)), docs, judge)
compre = compre_score(claims, answer, judge)
lr, ratio = robust_score(answer, "Tell me about Mars.", docs, {"d1", "d2"}, scorer)
print(f"attr={attr:.4f} compre={compre:.2f} log_ratio={lr:.3f} ratio={ratio:.3f}")

# the holistic reward is zero unless every statement is supported
for mode in ("literal", "deviation_penalty"):
    print(mode, breakdown(attr, lr, compre, RewardConfig(robust_mode=mode)).holistic)
    print(mode, "if fully supported:", breakdown(1.0, lr, compre, RewardConfig(robust_mode=mode)).holistic)
