"""A simulated language model for running the whole pipeline without GPUs.

:class:`SimulatedModel` recognises the task of a prompt by its trailing label
line (``Response:``, ``Claims:``, ``Documents:``, ``Answer:``) and produces a
plausible, fully deterministic reply:

* closed-book answers are sentences over pseudo-words that never repeat
  within one answer, so claim alignment is unambiguous;
* claim decomposition splits each sentence into its two clauses;
* synthetic documents contain their claims verbatim plus a fixed filler line;
* attributed answers copy sentences out of the prompt's documents and cite
  them, with ``skill`` controlling how often documents are skipped and
  citations go wrong.
"""

from __future__ import annotations

import random
import re

from .core import render_statement, segment
from .gateway import MockGenerator, context_documents

SYLLABLES = (
    "ka ve lo mi ra to su ne pa di ko ru sa fe li mo ta ze vi no "
    "ba ge hu ji ku ma pi re so tu"
).split()
VERBS = ("shapes", "feeds", "limits", "mirrors", "precedes", "anchors", "dampens", "signals")
FILLER = "This overview collects background notes for general readers."

_CLAUSE_SPLIT = ", while "


def _pseudo_word(i: int) -> str:
    n = len(SYLLABLES)
    return SYLLABLES[i % n] + SYLLABLES[(i // n) % n] + SYLLABLES[(i // n // n) % n]


def _section(prompt: str, label: str, end_label: str) -> str:
    m = re.search(rf"{re.escape(label)}\s*(.*?)\n{re.escape(end_label)}\s*$", prompt, re.S)
    return m.group(1).strip() if m else ""


def _last_label(prompt: str) -> str:
    lines = [ln.strip() for ln in prompt.rstrip().splitlines() if ln.strip()]
    return lines[-1] if lines else ""


class SimulatedModel:
    def __init__(self, skill: float = 0.6, max_sentences: int = 6):
        if not 0 <= skill <= 1:
            raise ValueError("skill must lie in [0, 1]")
        self.skill = skill
        self.max_sentences = max_sentences

    def __call__(self, prompt: str, rng: random.Random) -> str:
        label = _last_label(prompt)
        if label == "Response:":
            return self.closed_book(rng)
        if label == "Claims:":
            return self.decompose(_section(prompt, "Response:", "Claims:"))
        if label == "Documents:":
            return self.document(_section(prompt, "Claim:", "Documents:"))
        if label == "Answer:":
            return self.answer(prompt, rng)
        return f"Mock reply {rng.randrange(10**6)}."

    def closed_book(self, rng: random.Random) -> str:
        n = rng.randint(3, self.max_sentences)
        ids = rng.sample(range(len(SYLLABLES) ** 3), 6 * n)
        words = [_pseudo_word(i) for i in ids]
        out = []
        for j in range(n):
            w = words[6 * j : 6 * j + 6]
            v1, v2 = rng.sample(VERBS, 2)
            out.append(f"The {w[0]} {w[1]} {v1} {w[2]}{_CLAUSE_SPLIT}the {w[3]} {w[4]} {v2} {w[5]}.")
        return " ".join(out)

    def decompose(self, response: str) -> str:
        claims = []
        for a, b in segment(response):
            sent = response[a:b].strip().rstrip(".")
            for clause in sent.split(_CLAUSE_SPLIT):
                clause = clause.strip()
                if clause:
                    claims.append(clause[0].upper() + clause[1:] + ".")
        return "\n".join(f"- {c}" for c in claims)

    def document(self, claims_text: str) -> str:
        claims = [c.strip() for c in claims_text.splitlines() if c.strip()]
        if not claims:
            return ""
        head = claims[0].rstrip(".").split()
        title = "Notes on " + " ".join(head[1:3] if len(head) > 2 else head)
        return title + "\n" + " ".join(claims + [FILLER])

    def answer(self, prompt: str, rng: random.Random) -> str:
        docs = context_documents(prompt)
        s = self.skill
        parts = []
        if '"yes" or "no"' in prompt:
            parts.append(rng.choice(["Yes.", "No."]))
        p_include = 0.6 + 0.4 * s
        p_keep = 0.85 + 0.15 * s
        p_wrong = (1 - s) * 0.12
        p_uncited = (1 - s) * 0.04
        for k, _title, body in docs:
            if rng.random() >= p_include:
                continue
            for a, b in segment(body):
                sent = body[a:b]
                if sent == FILLER or rng.random() >= p_keep:
                    continue
                r = rng.random()
                if r < p_wrong:
                    others = [j for j, _, _ in docs if j != k] or [k + 1]
                    cite = [rng.choice(others + [len(docs) + 1])]
                elif r < p_wrong + p_uncited:
                    cite = []
                else:
                    cite = [k]
                parts.append(render_statement(sent, cite))
        if len(parts) == (1 if parts and parts[0] in ("Yes.", "No.") else 0) and docs:
            k, _, body = docs[0]
            a, b = segment(body)[0]
            parts.append(render_statement(body[a:b], [k]))
        return " ".join(parts) if parts else "I could not find an answer."


def simulated_generator(skill: float = 0.6, salt: str = "") -> MockGenerator:
    return MockGenerator(responder=SimulatedModel(skill), salt=salt)
