"""Citation recall, precision and F1 for a few hand-written answers."""

from __future__ import annotations

from attrforge.core import Document, DocumentSet, parse_response
from attrforge.gateway import MockJudge
from attrforge.metrics import CorrectnessSpec, correctness, evaluate_citations

docs = DocumentSet(
    [
        Document("d1", "", "Dune was published in 1965."),
        Document("d2", "", "Frank Herbert wrote Dune."),
        Document("d3", "", "Bread needs yeast."),
    ]
)
answers = [
    "Dune was published in 1965 [1]. Frank Herbert wrote Dune [2].",
    "Dune was published in 1965 [1][2].",
    "Dune was published in 1965 [1]. Frank Herbert wrote Dune.",
    "Bread needs yeast [3][7].",
]
judge = MockJudge()
for text in answers:
    e = evaluate_citations(parse_response(text, len(docs)), docs, judge)
    print(f"R={e.recall:.2f} P={e.precision:.2f} F1={e.f1:.2f}  {text}")

spec = CorrectnessSpec(mode="em_recall", gold=["1965", ["Frank Herbert", "Herbert"]])
print("em recall:", correctness(answers[0], spec))
