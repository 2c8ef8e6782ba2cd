"""Fine-grained rewards for sampled responses and their gated combination.

* attributability: share of statements entailed by their cited documents;
* robustness: ratio of the response's probability given only the relevant
  documents to its probability given the full (distractor-laden) set,
  computed in log space;
* comprehensiveness: share of gold claims entailed by the response.

The holistic reward is zero unless every statement is attributable.
"""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass
from typing import Collection, Sequence

from .core import AttributedResponse, DocumentSet, Statement, concat_documents, strip_citations
from .gateway import GatewayError, Judge, LogprobRequest, Scorer
from .prompts import PromptBook

ROBUST_MODES = ("literal", "deviation_penalty")


class JudgeError(Exception):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"item {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class RewardConfig:
    attr_threshold: float = 1.0
    compre_threshold: float = 0.8
    robust_mode: str = "literal"
    max_premise_chars: int = 6000
    attr_epsilon: float = 1e-12

    def __post_init__(self) -> None:
        for name in ("attr_threshold", "compre_threshold"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.robust_mode not in ROBUST_MODES:
            raise ValueError(f"robust_mode must be one of {ROBUST_MODES}")

    def passes(self, attr: float, compre: float) -> bool:
        return attr >= self.attr_threshold - self.attr_epsilon and compre >= self.compre_threshold


@dataclass(frozen=True)
class RewardBreakdown:
    attr_score: float
    robust_log_ratio: float
    robust_score: float
    compre_score: float
    holistic: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RewardBreakdown":
        return cls(**{k: float(d[k]) for k in ("attr_score", "robust_log_ratio", "robust_score", "compre_score", "holistic")})


def cited_premise(stmt: Statement, docs: DocumentSet, max_chars: int | None = None) -> str:
    """Cited documents concatenated in ascending index order."""
    text = concat_documents(docs.cite(k) for k in stmt.citations)
    return text if max_chars is None else text[:max_chars]


def _entailed(judge: Judge, premise: str, hypothesis: str, index: int) -> bool:
    try:
        return judge.entail(premise, hypothesis).entailed
    except (GatewayError, ValueError) as e:
        raise JudgeError(str(e), index) from e


def statement_supported(stmt: Statement, docs: DocumentSet, judge: Judge, index: int = 0, max_chars: int | None = None) -> bool:
    """Has at least one resolved citation and the cited text entails the statement."""
    if not stmt.citations or not stmt.text.strip():
        return False
    return _entailed(judge, cited_premise(stmt, docs, max_chars), stmt.text, index)


def attr_score(resp: AttributedResponse, docs: DocumentSet, judge: Judge, max_premise_chars: int | None = None) -> float:
    """Mean entailment of statements by their cited documents; uncited statements score 0."""
    if not resp.statements:
        return 0.0
    hits = sum(statement_supported(s, docs, judge, i, max_premise_chars) for i, s in enumerate(resp.statements))
    return hits / len(resp.statements)


def robust_score(
    y: str,
    q: str,
    docs: DocumentSet,
    relevant_ids: Collection[str],
    scorer: Scorer,
    prompts: PromptBook | None = None,
) -> tuple[float, float]:
    """``(log_ratio, ratio)`` of P(y | q + relevant docs) over P(y | q + all docs)."""
    relevant_ids = set(relevant_ids)
    unknown = relevant_ids - set(docs.ids())
    if unknown:
        raise ValueError(f"relevant ids not in document set: {sorted(unknown)}")
    prompts = prompts or PromptBook()
    ctx_all = prompts.context(q, docs)
    ctx_rel = prompts.context(q, [d for d in docs if d.doc_id in relevant_ids])
    if ctx_rel == ctx_all:
        return 0.0, 1.0
    lp_rel = scorer.logprob(LogprobRequest(ctx_rel, y)).logprob_sum
    lp_all = scorer.logprob(LogprobRequest(ctx_all, y)).logprob_sum
    log_ratio = lp_rel - lp_all
    return log_ratio, _exp(log_ratio)


def compre_score(gold_claims: Sequence, y: str, judge: Judge, max_premise_chars: int | None = None) -> float:
    """Share of gold claims entailed by the (citation-stripped) response."""
    if not gold_claims:
        raise ValueError("gold_claims must be non-empty")
    premise = strip_citations(y)
    if not premise:
        raise ValueError("response must be non-empty")
    if max_premise_chars is not None:
        premise = premise[:max_premise_chars]
    texts = [getattr(c, "text", c) for c in gold_claims]
    return sum(_entailed(judge, premise, t, i) for i, t in enumerate(texts)) / len(texts)


def holistic_reward(b: RewardBreakdown, cfg: RewardConfig = RewardConfig()) -> float:
    if b.attr_score < cfg.attr_threshold:
        return 0.0
    if cfg.robust_mode == "literal":
        if b.robust_score == 0.0:  # exp underflow
            # saturate rather than return inf so the reward stays finite
            return min(b.compre_score * _exp(-b.robust_log_ratio), sys.float_info.max)
        return b.compre_score / b.robust_score
    return b.compre_score * math.exp(-abs(b.robust_log_ratio))


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def breakdown(attr: float, log_ratio: float, compre: float, cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    """Assemble a breakdown and fill in its holistic reward."""
    b = RewardBreakdown(attr, log_ratio, _exp(log_ratio), compre)
    return RewardBreakdown(attr, log_ratio, b.robust_score, compre, holistic_reward(b, cfg))


def score_response(
    text: str,
    parsed: AttributedResponse,
    query: str,
    docs: DocumentSet,
    relevant_ids: Collection[str],
    gold_claims: Sequence,
    judge: Judge,
    scorer: Scorer,
    cfg: RewardConfig = RewardConfig(),
    prompts: PromptBook | None = None,
) -> RewardBreakdown:
    attr = attr_score(parsed, docs, judge, cfg.max_premise_chars)
    log_ratio, _ = robust_score(text, query, docs, relevant_ids, scorer, prompts)
    compre = compre_score(gold_claims, text, judge, cfg.max_premise_chars)
    return breakdown(attr, log_ratio, compre, cfg)
