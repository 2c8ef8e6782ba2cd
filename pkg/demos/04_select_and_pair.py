"""Sample candidates, keep the best passing one, and build preference pairs."""

from __future__ import annotations

import math

from attrforge.gateway import MockJudge, MockScorer
from attrforge.mockworld import simulated_generator
from attrforge.preference import build_pairs, dpo_loss
from attrforge.selection import rank_and_select, rank_candidates, sample_candidates, sampling_prompt, score_and_gate
from attrforge.synthesis import inject_distractors, synthesize_example

gen = simulated_generator(skill=0.6)
ex = synthesize_example("q1", "What causes the seasons on Earth?", gen, seed=3)
other = synthesize_example("q2", "Why is the sky blue?", gen, seed=3)
ex = inject_distractors(ex, list(other.documents), k=2, rng_seed=1)

texts = sample_candidates(ex, 16, gen, seed=9)
scored = rank_candidates(score_and_gate(texts, ex, MockJudge(), MockScorer()))
for c in scored:
    b = c.breakdown
    print(f"{c.candidate_id} passed={c.passed!s:5} attr={b.attr_score:.2f} compre={b.compre_score:.2f} rank={c.rank}")

top = rank_and_select(scored)
if top is None:
    print("no candidate passed both gates")
else:
    pairs = build_pairs(scored, top, sampling_prompt(ex))
    print(f"selected {top.candidate_id}; {len(pairs)} preference pairs")
    for p in pairs:
        print(f"  {p.objective}: rejected {p.rejected[:60]!r}")
    if pairs:
        # identical policy and reference scorers: every margin is zero
        mean, _ = dpo_loss(pairs, MockScorer(), MockScorer())
        print(f"mean DPO loss {mean:.6f} (ln 2 = {math.log(2):.6f})")
