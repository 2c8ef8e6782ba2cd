"""Independent reference implementations used as test oracles.

These deliberately avoid the package's metric and reward code paths: they
work in exact rationals and re-derive every condition from its definition.
"""

from __future__ import annotations

from fractions import Fraction

from attrforge.core import AttributedResponse, DocumentSet
from attrforge.gateway import Judge


def _premise(docs: DocumentSet, ks) -> str:
    return "\n\n".join(f"Title: {docs[k - 1].title}\n{docs[k - 1].body}" for k in sorted(ks))


def _entails(judge: Judge, docs: DocumentSet, ks, text: str) -> bool:
    if not ks or not text.strip():
        return False
    return judge.entail(_premise(docs, ks), text).entailed


def citation_metrics(
    resp: AttributedResponse, docs: DocumentSet, judge: Judge, count_failed_as_irrelevant: bool = True
) -> dict:
    """Recall, precision and F1 as exact fractions, by brute force.

    For every citation both conditions are evaluated independently:
    (a) the cited document alone does not entail the statement;
    (b) the statement's other citations still entail it.
    A citation is irrelevant iff (a) and (b) hold. Invalid citations and
    citations on statements that fail recall are irrelevant.
    """
    n = len(resp.statements)
    supported = [_entails(judge, docs, s.citations, s.text) for s in resp.statements]
    total = irrelevant = 0
    for s, ok in zip(resp.statements, supported):
        for k in s.citations:
            if not ok and not count_failed_as_irrelevant:
                continue
            total += 1
            if not ok:
                irrelevant += 1
                continue
            cond_a = not _entails(judge, docs, [k], s.text)
            others = [j for j in s.citations if j != k]
            cond_b = _entails(judge, docs, others, s.text)
            irrelevant += cond_a and cond_b
        total += len(s.invalid_citations)
        irrelevant += len(s.invalid_citations)
    recall = Fraction(sum(supported), n) if n else Fraction(0)
    precision = Fraction(total - irrelevant, total) if total else Fraction(0)
    return {"recall": recall, "precision": precision}


def f1(p: float, r: float) -> float:
    P, R = Fraction(p), Fraction(r)
    return 0.0 if P + R == 0 else float(2 * P * R / (P + R))
