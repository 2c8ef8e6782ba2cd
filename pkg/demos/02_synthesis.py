"""Build one training example whose citations are correct by construction."""

from __future__ import annotations

from attrforge.core import render_response
from attrforge.gateway import MockJudge
from attrforge.mockworld import simulated_generator
from attrforge.rewards import attr_score
from attrforge.synthesis import distractor_pool, inject_distractors, synthesize_example

gen = simulated_generator(skill=0.7)
ex = synthesize_example("q1", "Why do rivers meander?", gen, seed=1)
other = synthesize_example("q2", "How do bees communicate?", gen, seed=1)

print("closed-book answer:", ex.closed_book)
print(f"{len(ex.claims)} claims in {len(ex.claim_sets)} groups")
for c in ex.claims:
    print(f"  {c.claim_id} (statement {c.parent_statement_idx}): {c.text}")

# add documents from another query as distractors; gold citations follow their documents
ex = inject_distractors(ex, distractor_pool([ex, other], "q1"), k=2, rng_seed=4)
for k, d in enumerate(ex.documents, start=1):
    print(f"  [{k}] {d.doc_id:8s} {d.origin:12s} {d.title}")

print("gold response:", render_response(ex.gold_response))
print("flags:", ex.flags or "none")
print("attr of gold under the mock judge:", attr_score(ex.gold_response, ex.documents, MockJudge()))
