"""End-to-end stages: synthesis, self-improvement iterations, evaluation, reporting.

Each ``cmd_*`` function takes a validated :class:`~attrforge.config.RunConfig`,
writes its artifacts under the workspace through a :class:`StageWriter`, and
returns a :class:`StageResult`. Exit codes follow the CLI contract: 0 ok,
1 validation, 2 backend unreachable, 3 partial failure above threshold.
"""

from __future__ import annotations

import json
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .config import ConfigError, RunConfig, build_gateway
from .core import Document, DocumentSet, parse_response
from .gateway import GatewayError, TransportError
from .metrics import CorrectnessSpec, citation_f1, correctness, evaluate_citations
from .preference import DpoConfig, PreferencePair, build_pairs, dpo_diagnostics, dpo_loss, emit_dpo_dataset
from .prompts import PromptBook
from .rewards import JudgeError
from .selection import (
    build_rsft_dataset,
    format_rate,
    pass_rate,
    rank_and_select,
    rank_candidates,
    sample_candidates,
    sampling_prompt,
    score_and_gate,
    selection_report,
)
from .store import Manifest, SchemaError, StageWriter, read_jsonl, sha256_file
from .synthesis import (
    PoolTooSmall,
    SynthesisError,
    SyntheticExample,
    build_warmup_dataset,
    derive_seed,
    distractor_pool,
    inject_distractors,
    synthesize_example,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_BACKEND, EXIT_PARTIAL = 0, 1, 2, 3
ADAPTERS = ("asqa", "eli5", "strategyqa", "generic")


@dataclass
class StageResult:
    exit_code: int
    message: str
    counters: dict = field(default_factory=dict)
    skipped: bool = False


class StageFailed(Exception):
    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code


def _prepare(cfg: RunConfig) -> Manifest:
    cfg.validate()
    manifest = Manifest(cfg.workspace)
    snap = cfg.snapshot()
    run_id = derive_seed(json.dumps(snap, sort_keys=True))
    manifest.data["run_id"] = f"{run_id:016x}"
    manifest.data["config"] = snap
    return manifest


def _timed(manifest: Manifest, cfg: RunConfig, stage: str, t0: float) -> None:
    if cfg.record_timings:
        manifest.data.setdefault("timings", {})[stage] = round(time.perf_counter() - t0, 3)
        manifest.save()


def load_queries(path: Path) -> list[tuple[str, str]]:
    if not path.exists():
        raise ConfigError(f"queries file not found: {path}")
    out, seen = [], set()
    for i, rec in enumerate(read_jsonl(path), start=1):
        qid, q = rec.get("query_id"), rec.get("query")
        if not isinstance(qid, str) or not qid or not isinstance(q, str) or not q.strip():
            raise SchemaError(path, i, 'expected {"query_id": str, "query": str}')
        if qid in seen:
            raise SchemaError(path, i, f"duplicate query_id {qid!r}")
        seen.add(qid)
        out.append((qid, q))
    return out


def load_examples(cfg: RunConfig) -> list[SyntheticExample]:
    path = Path(cfg.workspace) / "synth" / "examples.jsonl"
    if not path.exists():
        raise ConfigError("no synthetic examples in the workspace; run `synth` first")
    return [SyntheticExample.from_dict(r) for r in read_jsonl(path)]


def _guard_failures(n_failed: int, n_total: int, cfg: RunConfig, what: str) -> int:
    if n_total and n_failed / n_total > cfg.failure_threshold:
        logger.error("%d of %d %s failed (threshold %.0f%%)", n_failed, n_total, what, 100 * cfg.failure_threshold)
        return EXIT_PARTIAL
    return EXIT_OK


# --------------------------------------------------------------------------
# synth


def cmd_synth(cfg: RunConfig, force: bool = False) -> StageResult:
    t0 = time.perf_counter()
    manifest = _prepare(cfg)
    if cfg.queries is None:
        raise ConfigError("no queries file configured")
    queries = load_queries(Path(cfg.queries))
    inputs = {"queries": sha256_file(cfg.queries), "config": manifest.data["run_id"]}
    if not force and manifest.is_complete("synth", inputs):
        return StageResult(EXIT_OK, "synth already complete (use --force to redo)", manifest.stages["synth"]["counters"], True)

    gw = build_gateway(cfg, iteration=0)
    prompts = PromptBook(cfg.template_dir)
    syn = cfg.synthesis
    failures: dict[str, str] = {}

    def one(item: tuple[str, str]) -> SyntheticExample | None:
        qid, q = item
        try:
            return synthesize_example(
                qid,
                q,
                gw.generator,
                prompts,
                cfg.sampling,
                (syn.group_size_min, syn.group_size_max),
                cfg.global_seed,
            )
        except TransportError:
            raise
        except (SynthesisError, GatewayError, ValueError) as e:
            failures[qid] = f"{type(e).__name__}: {e}"
            logger.warning("query %s failed synthesis: %s", qid, e)
            return None

    try:
        drafted = [ex for ex in gw.map(one, queries) if ex is not None]
    except TransportError as e:
        raise StageFailed(EXIT_BACKEND, f"generator unreachable: {e}") from e

    examples, shortfall = [], 0
    for ex in drafted:
        pool = distractor_pool(drafted, ex.query_id)
        k = syn.distractors_k
        if len(pool) < k:
            shortfall += 1
            k = len(pool)
        try:
            examples.append(inject_distractors(ex, pool, k, derive_seed(cfg.global_seed, ex.query_id, "distractors")))
        except PoolTooSmall as e:  # pragma: no cover - k is clamped above
            failures[ex.query_id] = str(e)

    warmup = build_warmup_dataset(examples, syn.warmup_fraction, derive_seed(cfg.global_seed, "warmup"), prompts)
    for rec in warmup:
        rec["meta"]["training"] = {k: cfg.training[k] for k in ("warmup_epochs", "learning_rate")}

    flag_kinds: dict[str, int] = {}
    for ex in examples:
        for f in ex.flags:
            kind = f.split(":", 1)[0]
            flag_kinds[kind] = flag_kinds.get(kind, 0) + 1
    lengths = [len(d.body.split()) for ex in examples for d in ex.documents if d.origin == "synthesized"]
    counters = {
        "queries": len(queries),
        "examples": len(examples),
        "failed": len(failures),
        "flagged": sum(1 for ex in examples if ex.flags),
        "warmup_records": len(warmup),
        "distractor_shortfall": shortfall,
    }
    report = {
        **counters,
        "flag_kinds": dict(sorted(flag_kinds.items())),
        "failures": dict(sorted(failures.items())),
        "document_words": {
            "count": len(lengths),
            "mean": round(statistics.fmean(lengths), 3) if lengths else None,
            "min": min(lengths) if lengths else None,
            "max": max(lengths) if lengths else None,
        },
    }
    with StageWriter(manifest, "synth") as w:
        w.write_jsonl("examples.jsonl", (ex.to_dict() for ex in examples))
        w.write_jsonl("warmup_sft.jsonl", warmup)
        w.write_json("report.json", report)
        w.commit(counters=counters, inputs=inputs)
    _timed(manifest, cfg, "synth", t0)
    code = _guard_failures(len(failures), len(queries), cfg, "queries")
    return StageResult(code, f"synthesized {len(examples)} examples, {len(warmup)} warm-up records", counters)


# --------------------------------------------------------------------------
# iterate


def run_iteration(cfg: RunConfig, examples: Sequence[SyntheticExample], iteration: int) -> dict:
    """Sample, score, select and pair for every example. Returns in-memory artifacts."""
    gw = build_gateway(cfg, iteration=iteration)
    prompts = PromptBook(cfg.template_dir)
    rcfg = cfg.reward_config
    robust_scorer = getattr(gw, cfg.selection.robust_role)
    failures: dict[str, str] = {}

    def one(ex: SyntheticExample):
        prompt = sampling_prompt(ex, prompts)
        try:
            texts = sample_candidates(
                ex,
                cfg.selection.n_candidates,
                gw.generator,
                prompts,
                cfg.sampling,
                derive_seed(cfg.global_seed, ex.query_id, "sample", iteration),
            )
        except TransportError:
            raise
        except GatewayError as e:
            failures[ex.query_id] = str(e)
            return ex, prompt, [], None
        # candidates of one query are scored sequentially; queries run in parallel
        scored = rank_candidates(score_and_gate(texts, ex, gw.judge, robust_scorer, rcfg, prompts))
        return ex, prompt, scored, rank_and_select(scored)

    results = gw.map(one, examples)

    candidates, reports, selected, pairs = [], [], [], []
    prompts_by_query = {}
    for ex, prompt, scored, top in results:
        prompts_by_query[ex.query_id] = prompt
        candidates.extend(c.to_record() for c in scored)
        if scored:
            reports.append(selection_report(ex.query_id, scored, top))
        if top is not None:
            selected.append(top)
            pairs.extend(build_pairs(scored, top, prompt, rcfg, cfg.dpo.max_pairs_per_query))

    dpo_cfg = DpoConfig(cfg.dpo.beta)
    if pairs:
        mean_loss, per_pair = dpo_loss(pairs, gw.policy_scorer, gw.reference_scorer, dpo_cfg, cfg.parallelism)
    else:
        mean_loss, per_pair = None, []

    meta = {"iteration": iteration, "training": {"epochs": cfg.training["rsft_epochs_per_iteration"]}}
    rsft = build_rsft_dataset(selected, prompts_by_query, **meta)
    n_sampled = sum(r.n_sampled for r in reports)
    summary = {
        "iteration": iteration,
        "queries": len(examples),
        "n_sampled": n_sampled,
        "n_passed": sum(r.n_passed for r in reports),
        "pass_rate": pass_rate(reports) if n_sampled else None,
        "pass_rate_pct": format_rate(pass_rate(reports)) if n_sampled else None,
        "n_selected": len(selected),
        "n_failed_candidates": sum(1 for c in candidates if "error" in c),
        "failed_queries": dict(sorted(failures.items())),
        "per_query": [r.to_dict() for r in reports],
    }
    return {
        "candidates": candidates,
        "rsft": rsft,
        "pairs": pairs,
        "summary": summary,
        "diagnostics": dpo_diagnostics(pairs, per_pair, mean_loss),
        "failures": failures,
    }


def cmd_iterate(cfg: RunConfig, iteration: int, force: bool = False) -> StageResult:
    if iteration < 1:
        raise ConfigError("iteration index must be >= 1")
    t0 = time.perf_counter()
    manifest = _prepare(cfg)
    if "synth" not in manifest.stages:
        raise ConfigError("no completed synth stage in the manifest; run `synth` first")
    stage = f"iter{iteration}"
    examples_digest = manifest.stages["synth"]["artifacts"]["examples.jsonl"]["sha256"]
    inputs = {"examples": examples_digest, "config": manifest.data["run_id"]}
    if not force and manifest.is_complete(stage, inputs):
        return StageResult(EXIT_OK, f"{stage} already complete (use --force to redo)", manifest.stages[stage]["counters"], True)

    examples = [ex for ex in load_examples(cfg) if ex.flag_free]
    try:
        out = run_iteration(cfg, examples, iteration)
    except TransportError as e:
        raise StageFailed(EXIT_BACKEND, f"backend unreachable: {e}") from e

    s = out["summary"]
    by_obj = out["diagnostics"]["per_objective"]
    counters = {
        "candidates": s["n_sampled"],
        "passed": s["n_passed"],
        "selected": s["n_selected"],
        "rsft_records": len(out["rsft"]),
        "pairs_attributability": by_obj["attributability"]["n_pairs"],
        "pairs_comprehensiveness": by_obj["comprehensiveness"]["n_pairs"],
    }
    with StageWriter(manifest, stage) as w:
        w.write_jsonl("candidates.jsonl", out["candidates"])
        w.write_jsonl("rsft.jsonl", out["rsft"])
        w.write_jsonl("dpo.jsonl", emit_dpo_dataset(out["pairs"], cfg.reward_config))
        w.write_json("selection_report.json", s)
        w.write_json("dpo_diagnostics.json", out["diagnostics"])
        w.commit(counters=counters, inputs=inputs, extra={"iteration": iteration})
    _timed(manifest, cfg, stage, t0)
    code = _guard_failures(len(out["failures"]), len(examples), cfg, "queries")
    if code == EXIT_OK:
        code = _guard_failures(s["n_failed_candidates"], max(1, s["n_sampled"]), cfg, "candidates")
    rate = s["pass_rate_pct"] or "n/a"
    return StageResult(code, f"{stage}: {s['n_sampled']} candidates, pass rate {rate}, {len(out['pairs'])} pairs", counters)


# --------------------------------------------------------------------------
# eval


def _documents(qid: str, docs: list, path, line) -> DocumentSet:
    out = []
    for j, d in enumerate(docs, start=1):
        if not isinstance(d, dict) or not (d.get("text") or d.get("body")):
            raise SchemaError(path, line, f"document {j} needs a non-empty 'text' or 'body'")
        out.append(
            Document(
                doc_id=str(d.get("doc_id") or d.get("id") or f"{qid}-{j}"),
                title=str(d.get("title", "")),
                body=str(d.get("body") or d.get("text")),
            )
        )
    return DocumentSet(out)


def correctness_spec(adapter: str, gold: dict | None) -> CorrectnessSpec | None:
    """Map an adapter's gold record to a correctness specification (None: not scored)."""
    if not gold:
        return None
    if adapter == "asqa":
        if "qa_pairs" in gold:
            return CorrectnessSpec("em_recall", [list(p["short_answers"]) for p in gold["qa_pairs"]])
        return CorrectnessSpec("em_recall", list(gold["short_answers"]))
    if adapter == "eli5":
        return CorrectnessSpec("claim_recall", list(gold["claims"]))
    if adapter == "strategyqa":
        return CorrectnessSpec("yesno_accuracy", gold["answer"])
    if "mode" in gold:
        return CorrectnessSpec(gold["mode"], gold["gold"])
    return None


def load_eval_records(predictions: Path, gold_path: Path | None) -> list[dict]:
    preds = read_jsonl(predictions)
    for i, r in enumerate(preds, start=1):
        if not isinstance(r.get("query_id"), str) or not isinstance(r.get("response"), str):
            raise SchemaError(predictions, i, 'expected {"query_id": str, "response": str, ...}')
    if gold_path is None:
        if not preds:
            raise SchemaError(predictions, None, "no predictions")
        return [dict(r, _line=i) for i, r in enumerate(preds, start=1)]
    gold = read_jsonl(gold_path)
    by_id = {}
    for i, r in enumerate(preds, start=1):
        if r["query_id"] in by_id:
            raise SchemaError(predictions, i, f"duplicate query_id {r['query_id']!r}")
        by_id[r["query_id"]] = (i, r)
    missing = [g.get("query_id") for g in gold if g.get("query_id") not in by_id]
    if missing:
        raise SchemaError(predictions, None, f"missing predictions for ids: {', '.join(map(str, missing))}")
    merged = []
    for g in gold:
        line, p = by_id[g["query_id"]]
        merged.append({**g, **{k: v for k, v in p.items() if v is not None}, "_line": line})
    return merged


def evaluate_records(records: Sequence[dict], adapter: str, judge, source="predictions") -> dict:
    per = []
    for r in records:
        line = r.get("_line")
        qid = r["query_id"]
        docs = _documents(qid, r.get("docs", []), source, line)
        parsed = parse_response(r["response"], len(docs))
        try:
            spec = correctness_spec(adapter, r.get("gold"))
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(source, line, f"bad gold for adapter {adapter}: {e}") from e
        cit = evaluate_citations(parsed, docs, judge)
        per.append(
            {
                "query_id": qid,
                "correctness": None if spec is None else correctness(r["response"], spec, judge),
                "citation_recall": cit.recall,
                "citation_precision": cit.precision,
                "citation_f1": cit.f1,
                "n_statements": len(parsed.statements),
            }
        )

    def mean(key):
        vals = [p[key] for p in per if p[key] is not None]
        return sum(vals) / len(vals) if vals else None

    rec, prec = mean("citation_recall"), mean("citation_precision")
    macro = {
        "correctness": mean("correctness"),
        "citation_recall": rec,
        "citation_precision": prec,
        "citation_f1": citation_f1(prec, rec) if rec is not None else None,
    }
    return {"adapter": adapter, "n_examples": len(per), "averaging": "macro over examples", "macro": macro, "per_example": per}


def _pct(v: float | None) -> str:
    return "-" if v is None else f"{100 * v:.1f}"


def format_eval_table(report: dict) -> str:
    m = report["macro"]
    header = f"{'Correctness':>12} {'Citation Rec.':>14} {'Prec.':>7} {'F1':>7}"
    row = f"{_pct(m['correctness']):>12} {_pct(m['citation_recall']):>14} {_pct(m['citation_precision']):>7} {_pct(m['citation_f1']):>7}"
    return f"adapter: {report['adapter']}  examples: {report['n_examples']}  ({report['averaging']})\n{header}\n{row}\n"


def cmd_eval(
    cfg: RunConfig,
    predictions: Path,
    adapter: str = "generic",
    gold: Path | None = None,
    force: bool = False,
) -> StageResult:
    if adapter not in ADAPTERS:
        raise ConfigError(f"unknown adapter {adapter!r}; choose from {ADAPTERS}")
    manifest = _prepare(cfg)
    predictions = Path(predictions)
    if not predictions.exists():
        raise ConfigError(f"predictions file not found: {predictions}")
    inputs = {"predictions": sha256_file(predictions), "adapter": adapter}
    if gold is not None:
        inputs["gold"] = sha256_file(gold)
    if not force and manifest.is_complete("eval", inputs):
        return StageResult(EXIT_OK, "eval already complete (use --force to redo)", manifest.stages["eval"]["counters"], True)
    records = load_eval_records(predictions, Path(gold) if gold else None)
    gw = build_gateway(cfg)
    try:
        report = evaluate_records(records, adapter, gw.judge, predictions)
    except JudgeError as e:
        cause = e.__cause__
        if isinstance(cause, TransportError):
            raise StageFailed(EXIT_BACKEND, f"judge unreachable: {cause}") from e
        raise StageFailed(EXIT_PARTIAL, f"judge failed: {e}") from e
    table = format_eval_table(report)
    counters = {"examples": report["n_examples"], **{k: v for k, v in report["macro"].items()}}
    with StageWriter(manifest, "eval") as w:
        w.write_json("report.json", report)
        w.write_text("report.txt", table)
        w.commit(counters=counters, inputs=inputs)
    return StageResult(EXIT_OK, table, counters)


# --------------------------------------------------------------------------
# report


def build_report(workspace: Path) -> tuple[dict, list[str]]:
    manifest_path = Path(workspace) / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest at {manifest_path}")
    manifest = Manifest(workspace)
    warnings = []
    for stage in manifest.stages:
        warnings.extend(manifest.verify(stage))

    synth = manifest.stages.get("synth", {}).get("counters")
    iterations = []
    for stage, entry in sorted(
        ((s, e) for s, e in manifest.stages.items() if s.startswith("iter")), key=lambda se: se[1].get("iteration", 0)
    ):
        row = {"stage": stage, "iteration": entry.get("iteration"), **entry.get("counters", {})}
        rep = Path(workspace) / stage / "selection_report.json"
        if rep.exists():
            data = json.loads(rep.read_text(encoding="utf-8"))
            row["pass_rate"] = data.get("pass_rate")
        else:
            row["pass_rate"] = None
        iterations.append(row)
    return {"run_id": manifest.data.get("run_id"), "synth": synth, "iterations": iterations, "eval": manifest.stages.get("eval", {}).get("counters")}, warnings


def format_report(report: dict, warnings: Sequence[str]) -> str:
    lines = [f"run {report['run_id']}"]
    s = report["synth"]
    if s:
        lines.append(
            f"synthesis: {s['examples']} examples ({s['flagged']} flagged, {s['failed']} failed), "
            f"{s['warmup_records']} warm-up records"
        )
    else:
        lines.append("synthesis: not run")
    if report["iterations"]:
        lines.append("")
        lines.append(f"{'Iteration':<10} {'Sampled':>8} {'Passed':>8} {'Pass rate':>10} {'RSFT':>6} {'Pairs (attr/compre)':>20}")
        for r in report["iterations"]:
            rate = "-" if r["pass_rate"] is None else format_rate(r["pass_rate"])
            pairs = f"{r.get('pairs_attributability', 0)}/{r.get('pairs_comprehensiveness', 0)}"
            lines.append(
                f"{r['stage']:<10} {r.get('candidates', 0):>8} {r.get('passed', 0):>8} {rate:>10} {r.get('rsft_records', 0):>6} {pairs:>20}"
            )
    if report.get("eval"):
        e = report["eval"]
        lines.append("")
        lines.append(
            f"eval: correctness {_pct(e.get('correctness'))}, citation rec. {_pct(e.get('citation_recall'))}, "
            f"prec. {_pct(e.get('citation_precision'))}, F1 {_pct(e.get('citation_f1'))}"
        )
    for w in warnings:
        lines.append(f"WARNING: {w}")
    return "\n".join(lines) + "\n"


def cmd_report(cfg: RunConfig, as_json: bool = False) -> StageResult:
    report, warnings = build_report(Path(cfg.workspace))
    text = json.dumps({**report, "warnings": warnings}, indent=2) if as_json else format_report(report, warnings)
    return StageResult(EXIT_OK, text, {"warnings": len(warnings)})
