"""Automatic evaluation: citation recall, precision and F1, plus answer correctness."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .core import AttributedResponse, DocumentSet, Statement, concat_documents, strip_citations
from .gateway import Judge
from .rewards import JudgeError, _entailed, statement_supported
from .text import normalize_answer

CORRECTNESS_MODES = ("em_recall", "claim_recall", "yesno_accuracy")


@dataclass
class CitationEval:
    recall: float
    precision: float
    f1: float
    per_statement: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"recall": self.recall, "precision": self.precision, "f1": self.f1, "per_statement": self.per_statement}


@dataclass(frozen=True)
class CorrectnessSpec:
    mode: str
    gold: object

    def __post_init__(self) -> None:
        if self.mode not in CORRECTNESS_MODES:
            raise ValueError(f"unknown correctness mode {self.mode!r}")
        if self.mode in ("em_recall", "claim_recall") and not self.gold:
            raise ValueError(f"{self.mode} needs a non-empty gold list")
        if self.mode == "yesno_accuracy" and yesno_label(self.gold) is None:
            raise ValueError(f"yes/no gold must be a boolean or 'yes'/'no', got {self.gold!r}")


def _supports(judge: Judge, docs: DocumentSet, ks: Sequence[int], stmt: Statement, index: int) -> bool:
    if not ks:
        return False
    return _entailed(judge, concat_documents(docs.cite(k) for k in sorted(ks)), stmt.text, index)


def citation_recall(resp: AttributedResponse, docs: DocumentSet, judge: Judge) -> float:
    """Share of statements with a valid citation whose cited text entails them."""
    if not resp.statements:
        return 0.0
    return sum(statement_supported(s, docs, judge, i) for i, s in enumerate(resp.statements)) / len(resp.statements)


def _irrelevant(stmt: Statement, k: int, docs: DocumentSet, judge: Judge, index: int) -> bool:
    # (a) the citation alone does not entail, and (b) the remaining citations still do
    alone = _supports(judge, docs, [k], stmt, index)
    if alone:
        return False
    rest = [j for j in stmt.citations if j != k]
    return _supports(judge, docs, rest, stmt, index)


def evaluate_citations(
    resp: AttributedResponse,
    docs: DocumentSet,
    judge: Judge,
    count_failed_as_irrelevant: bool = True,
) -> CitationEval:
    """Recall, precision and F1 for one response.

    Invalid (unresolvable) citations always count as irrelevant. Citations on
    statements that fail recall count as irrelevant unless
    ``count_failed_as_irrelevant`` is false, in which case they are left out
    of the precision denominator.
    """
    per, hits, total, irrelevant = [], 0, 0, 0
    for i, s in enumerate(resp.statements):
        ok = statement_supported(s, docs, judge, i)
        hits += ok
        bad: list[int] = []
        if ok:
            bad = [k for k in s.citations if _irrelevant(s, k, docs, judge, i)]
            total += len(s.citations)
        elif count_failed_as_irrelevant:
            bad = list(s.citations)
            total += len(s.citations)
        bad += list(s.invalid_citations)
        total += len(s.invalid_citations)
        irrelevant += len(bad)
        per.append({"recall_ok": bool(ok), "irrelevant_citations": sorted(bad)})
    recall = hits / len(resp.statements) if resp.statements else 0.0
    # (total - irrelevant) / total rounds once, unlike 1 - irrelevant / total
    precision = (total - irrelevant) / total if total else 0.0
    return CitationEval(recall, precision, citation_f1(precision, recall), per)


def citation_precision(resp: AttributedResponse, docs: DocumentSet, judge: Judge, count_failed_as_irrelevant: bool = True) -> float:
    return evaluate_citations(resp, docs, judge, count_failed_as_irrelevant).precision


def citation_f1(p: float, r: float) -> float:
    """Harmonic mean, defined as 0 when both are 0."""
    if not (0 <= p <= 1 and 0 <= r <= 1):
        raise ValueError("precision and recall must lie in [0, 1]")
    if p + r == 0:
        return 0.0
    # exact rational arithmetic, then a single rounding
    fp, fr = Fraction(p), Fraction(r)
    return float(2 * fp * fr / (fp + fr))


def yesno_label(value: object) -> str | None:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, str) and value.strip().lower() in ("yes", "no"):
        return value.strip().lower()
    return None


def _first_alpha_token(text: str) -> str:
    word = []
    for ch in text:
        if ch.isalpha():
            word.append(ch)
        elif word:
            break
    return "".join(word).casefold()


def _alias_hit(gold: str | Sequence[str], norm_text: str) -> bool:
    # a gold item may be a list of aliases; any one of them counts
    aliases = [gold] if isinstance(gold, str) else list(gold)
    return any(normalize_answer(a) and normalize_answer(a) in norm_text for a in aliases)


def correctness(resp_text: str, spec: CorrectnessSpec, judge: Judge | None = None) -> float:
    text = strip_citations(resp_text)
    if spec.mode == "em_recall":
        norm = normalize_answer(text)
        golds = list(spec.gold)
        return sum(_alias_hit(g, norm) for g in golds) / len(golds)
    if spec.mode == "claim_recall":
        if judge is None:
            raise ValueError("claim_recall needs a judge")
        claims = list(spec.gold)
        if not text:
            return 0.0
        return sum(_entailed(judge, text, c, i) for i, c in enumerate(claims)) / len(claims)
    return 1.0 if _first_alpha_token(text) == yesno_label(spec.gold) else 0.0


__all__ = [
    "CitationEval",
    "CorrectnessSpec",
    "JudgeError",
    "citation_f1",
    "citation_precision",
    "citation_recall",
    "correctness",
    "evaluate_citations",
]
