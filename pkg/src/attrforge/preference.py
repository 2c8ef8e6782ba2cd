"""Preference pairs targeting one deficiency each, and DPO objective diagnostics.

A candidate that is fully attributable but not comprehensive is paired
against the top-ranked candidate as a *comprehensiveness* pair; one that is
comprehensive but not fully attributable yields an *attributability* pair.
Candidates deficient in both match neither pattern and are skipped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .gateway import LogprobRequest, Scorer, parallel_map
from .rewards import RewardBreakdown, RewardConfig
from .selection import ScoredCandidate

OBJECTIVES = ("attributability", "comprehensiveness")
DEFAULT_MAX_PAIRS_PER_QUERY = 2


class PairValidationError(ValueError):
    pass


class MissingLogprob(ValueError):
    pass


@dataclass(frozen=True)
class PreferencePair:
    query_id: str
    prompt: str
    chosen: str
    rejected: str
    objective: str
    chosen_scores: RewardBreakdown
    rejected_scores: RewardBreakdown

    def to_record(self) -> dict:
        return {
            "prompt": self.prompt,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "objective": self.objective,
            "meta": {
                "query_id": self.query_id,
                "chosen_scores": self.chosen_scores.to_dict(),
                "rejected_scores": self.rejected_scores.to_dict(),
            },
        }

    @classmethod
    def from_record(cls, rec: dict) -> "PreferencePair":
        m = rec["meta"]
        return cls(
            query_id=m["query_id"],
            prompt=rec["prompt"],
            chosen=rec["chosen"],
            rejected=rec["rejected"],
            objective=rec["objective"],
            chosen_scores=RewardBreakdown.from_dict(m["chosen_scores"]),
            rejected_scores=RewardBreakdown.from_dict(m["rejected_scores"]),
        )


@dataclass(frozen=True)
class DpoConfig:
    beta: float = 0.1

    def __post_init__(self) -> None:
        if not self.beta > 0:
            raise ValueError("beta must be positive")


def deficiency(b: RewardBreakdown, cfg: RewardConfig) -> str | None:
    """Which objective a candidate is deficient in, if exactly one."""
    attr_ok = b.attr_score >= cfg.attr_threshold - cfg.attr_epsilon
    compre_ok = b.compre_score >= cfg.compre_threshold
    if not attr_ok and compre_ok:
        return "attributability"
    if attr_ok and not compre_ok:
        return "comprehensiveness"
    return None


def _severity(b: RewardBreakdown, objective: str, cfg: RewardConfig) -> float:
    if objective == "attributability":
        return cfg.attr_threshold - b.attr_score
    return cfg.compre_threshold - b.compre_score


def check_pair(p: PreferencePair, cfg: RewardConfig = RewardConfig()) -> None:
    """Raise :class:`PairValidationError` unless the pair satisfies its objective's pattern."""
    if p.objective not in OBJECTIVES:
        raise PairValidationError(f"unknown objective {p.objective!r}")
    if p.chosen == p.rejected:
        raise PairValidationError(f"chosen and rejected are identical for query {p.query_id}")
    if deficiency(p.rejected_scores, cfg) != p.objective:
        raise PairValidationError(f"rejected response does not match the {p.objective} pattern")


def build_pairs(
    scored: Sequence[ScoredCandidate],
    top: ScoredCandidate,
    prompt: str,
    cfg: RewardConfig = RewardConfig(),
    max_pairs_per_query: int = DEFAULT_MAX_PAIRS_PER_QUERY,
) -> list[PreferencePair]:
    if not top.passed or top.breakdown is None:
        raise ValueError("the top candidate must have passed both gates")
    buckets: dict[str, list[ScoredCandidate]] = {o: [] for o in OBJECTIVES}
    for c in scored:
        if c.breakdown is None or c.candidate_id == top.candidate_id:
            continue
        obj = deficiency(c.breakdown, cfg)
        if obj is not None:
            buckets[obj].append(c)

    pairs = []
    for obj in OBJECTIVES:
        ranked = sorted(buckets[obj], key=lambda c: (-_severity(c.breakdown, obj, cfg), c.candidate_id))
        texts = {top.text}
        for c in ranked:
            if len([p for p in pairs if p.objective == obj]) >= max_pairs_per_query:
                break
            if c.text in texts:
                continue
            texts.add(c.text)
            pairs.append(
                PreferencePair(
                    query_id=top.query_id,
                    prompt=prompt,
                    chosen=top.text,
                    rejected=c.text,
                    objective=obj,
                    chosen_scores=top.breakdown,
                    rejected_scores=c.breakdown,
                )
            )
    return pairs


def dpo_reward(logp_policy: float, logp_ref: float, cfg: DpoConfig = DpoConfig()) -> float:
    """Implicit reward ``beta * (log pi_theta - log pi_ref)``."""
    if not (math.isfinite(logp_policy) and math.isfinite(logp_ref)):
        raise ValueError("log-probabilities must be finite")
    return cfg.beta * (logp_policy - logp_ref)


def neg_log_sigmoid(z: float) -> float:
    """``-log(sigmoid(z))`` without overflow."""
    if z >= 0:
        return math.log1p(math.exp(-z))
    return -z + math.log1p(math.exp(z))


def pair_loss(
    policy_chosen: float,
    ref_chosen: float,
    policy_rejected: float,
    ref_rejected: float,
    cfg: DpoConfig = DpoConfig(),
) -> float:
    margin = dpo_reward(policy_chosen, ref_chosen, cfg) - dpo_reward(policy_rejected, ref_rejected, cfg)
    return neg_log_sigmoid(margin)


@dataclass(frozen=True)
class PairLogprobs:
    policy_chosen: float | None
    ref_chosen: float | None
    policy_rejected: float | None
    ref_rejected: float | None


def pair_logprobs(pair: PreferencePair, policy: Scorer, reference: Scorer) -> PairLogprobs:
    def lp(scorer: Scorer, text: str) -> float:
        return scorer.logprob(LogprobRequest(pair.prompt, text)).logprob_sum

    return PairLogprobs(
        lp(policy, pair.chosen), lp(reference, pair.chosen), lp(policy, pair.rejected), lp(reference, pair.rejected)
    )


def dpo_loss(
    pairs: Sequence[PreferencePair],
    policy: Scorer,
    reference: Scorer,
    cfg: DpoConfig = DpoConfig(),
    parallelism: int = 1,
) -> tuple[float, list[float]]:
    """Mean and per-pair DPO loss, with log-probabilities from the two scorer roles."""
    if not pairs:
        raise ValueError("dpo_loss needs at least one pair")
    lps = parallel_map(lambda p: pair_logprobs(p, policy, reference), pairs, parallelism)
    per_pair = []
    for p, lp in zip(pairs, lps):
        vals = (lp.policy_chosen, lp.ref_chosen, lp.policy_rejected, lp.ref_rejected)
        if any(v is None for v in vals):
            raise MissingLogprob(f"missing log-probability for pair in query {p.query_id}")
        per_pair.append(pair_loss(*vals, cfg))
    return sum(per_pair) / len(per_pair), per_pair


def dpo_diagnostics(pairs: Sequence[PreferencePair], per_pair: Sequence[float], mean_loss: float | None) -> dict:
    by_obj = {}
    for obj in OBJECTIVES:
        losses = [l for p, l in zip(pairs, per_pair) if p.objective == obj]
        by_obj[obj] = {"n_pairs": len(losses), "mean_loss": sum(losses) / len(losses) if losses else None}
    return {"mean_loss": mean_loss, "n_pairs": len(pairs), "per_objective": by_obj}


def emit_dpo_dataset(pairs: Iterable[PreferencePair], cfg: RewardConfig = RewardConfig()) -> list[dict]:
    records = []
    for p in pairs:
        check_pair(p, cfg)
        records.append(p.to_record())
    return records


def read_dpo_dataset(lines: Iterable[str]) -> list[PreferencePair]:
    return [PreferencePair.from_record(json.loads(ln)) for ln in lines if ln.strip()]
