"""Rejection sampling: sample candidates, score, gate, rank, and account pass rates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .core import AttributedResponse, parse_response
from .gateway import GatewayError, GenerationRequest, Generator, Judge, Scorer, parallel_map
from .prompts import PromptBook
from .rewards import JudgeError, RewardBreakdown, RewardConfig, score_response
from .synthesis import SamplingConfig, SyntheticExample

logger = logging.getLogger(__name__)

DEFAULT_N_CANDIDATES = 16


@dataclass(frozen=True)
class ScoredCandidate:
    candidate_id: str
    query_id: str
    text: str
    parsed: AttributedResponse | None
    breakdown: RewardBreakdown | None
    passed: bool
    rank: int | None = None
    error: str | None = None

    def to_record(self) -> dict:
        b = self.breakdown
        rec = {
            "query_id": self.query_id,
            "candidate_id": self.candidate_id,
            "text": self.text,
            "scores": None
            if b is None
            else {
                "attr": b.attr_score,
                "robust_log_ratio": b.robust_log_ratio,
                "compre": b.compre_score,
                "holistic": b.holistic,
            },
            "passed": self.passed,
        }
        if self.rank is not None:
            rec["rank"] = self.rank
        if self.error is not None:
            rec["error"] = self.error
        return rec


@dataclass(frozen=True)
class SelectionReport:
    query_id: str
    n_sampled: int
    n_passed: int
    top_candidate_id: str | None

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "n_sampled": self.n_sampled,
            "n_passed": self.n_passed,
            "top_candidate_id": self.top_candidate_id,
        }


def sampling_prompt(example: SyntheticExample, prompts: PromptBook | None = None) -> str:
    return (prompts or PromptBook()).attribution(example.query, example.documents)


def sample_candidates(
    example: SyntheticExample,
    n: int,
    generator: Generator,
    prompts: PromptBook | None = None,
    sampling: SamplingConfig = SamplingConfig(),
    seed: int | None = None,
) -> list[str]:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    req = GenerationRequest(
        prompt=sampling_prompt(example, prompts),
        n_samples=n,
        temperature=sampling.temperature,
        top_p=sampling.top_p,
        max_tokens=sampling.max_tokens,
        seed=seed,
    )
    return generator.generate(req)


def candidate_ids(query_id: str, n: int) -> list[str]:
    width = max(2, len(str(n - 1)))
    return [f"{query_id}-k{i:0{width}d}" for i in range(n)]


def score_and_gate(
    candidates: Sequence[str],
    example: SyntheticExample,
    judge: Judge,
    scorer: Scorer,
    cfg: RewardConfig = RewardConfig(),
    prompts: PromptBook | None = None,
    parallelism: int = 1,
) -> list[ScoredCandidate]:
    """Score every candidate; a failure marks that candidate failed and nothing else."""
    prompts = prompts or PromptBook()
    ids = candidate_ids(example.query_id, len(candidates))

    def one(item: tuple[str, str]) -> ScoredCandidate:
        cid, text = item
        parsed = parse_response(text, len(example.documents))
        try:
            b = score_response(
                text,
                parsed,
                example.query,
                example.documents,
                example.relevant_doc_ids,
                example.claims,
                judge,
                scorer,
                cfg,
                prompts,
            )
        except (JudgeError, GatewayError, ValueError) as e:
            logger.warning("candidate %s failed scoring: %s", cid, e)
            return ScoredCandidate(cid, example.query_id, text, parsed, None, False, error=str(e))
        return ScoredCandidate(cid, example.query_id, text, parsed, b, cfg.passes(b.attr_score, b.compre_score))

    return parallel_map(one, list(zip(ids, candidates)), parallelism)


def rank_key(c: ScoredCandidate) -> tuple:
    """Holistic desc, then comprehensiveness desc, then |log robust ratio| asc, then id."""
    b = c.breakdown
    return (-b.holistic, -b.compre_score, abs(b.robust_log_ratio), c.candidate_id)


def rank_candidates(scored: Iterable[ScoredCandidate]) -> list[ScoredCandidate]:
    """Assign 1-based ranks to passed candidates; others keep ``rank=None``. Input order kept."""
    scored = list(scored)
    passed = sorted((c for c in scored if c.passed), key=rank_key)
    ranks = {c.candidate_id: r for r, c in enumerate(passed, start=1)}
    return [replace(c, rank=ranks.get(c.candidate_id)) for c in scored]


def rank_and_select(scored: Iterable[ScoredCandidate]) -> ScoredCandidate | None:
    passed = [c for c in scored if c.passed]
    if not passed:
        return None
    return replace(min(passed, key=rank_key), rank=1)


def selection_report(query_id: str, scored: Sequence[ScoredCandidate], top: ScoredCandidate | None) -> SelectionReport:
    return SelectionReport(
        query_id=query_id,
        n_sampled=len(scored),
        n_passed=sum(c.passed for c in scored),
        top_candidate_id=None if top is None else top.candidate_id,
    )


def pass_rate(reports: Iterable[SelectionReport]) -> float:
    """Micro-averaged share of sampled candidates that passed both gates."""
    reports = list(reports)
    sampled = sum(r.n_sampled for r in reports)
    if sampled == 0:
        raise ValueError("pass rate undefined: no candidates were sampled")
    return sum(r.n_passed for r in reports) / sampled


def format_rate(rate: float) -> str:
    return f"{100 * rate:.1f}%"


def build_rsft_dataset(
    selected: Iterable[ScoredCandidate],
    prompts_by_query: Mapping[str, str],
    **meta,
) -> list[dict]:
    """One SFT record per query with a selection; the prompt is the sampling prompt."""
    records, seen = [], set()
    for c in selected:
        if not c.passed:
            raise ValueError(f"candidate {c.candidate_id} did not pass the gates")
        if c.query_id in seen:
            raise ValueError(f"duplicate selection for query {c.query_id}")
        seen.add(c.query_id)
        records.append(
            {
                "prompt": prompts_by_query[c.query_id],
                "response": c.text,
                "meta": {"query_id": c.query_id, "candidate_id": c.candidate_id, **meta},
            }
        )
    return records
