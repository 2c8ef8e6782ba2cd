from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from attrforge.cli import main
from attrforge.config import ConfigError, load_config
from attrforge.store import SchemaError

from .helpers import cli, full_run, read_jsonl, tree_digest, write_queries

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def run3(tmp_path_factory):
    root = tmp_path_factory.mktemp("run3")
    full_run(root)
    return root / "ws"


def test_synth_counts(run3):
    assert len(read_jsonl(run3 / "synth" / "examples.jsonl")) == 50
    assert len(read_jsonl(run3 / "synth" / "warmup_sft.jsonl")) == 10
    report = json.loads((run3 / "synth" / "report.json").read_text())
    assert report["examples"] == 50 and "flagged" in report


def test_iterations_share_one_manifest(run3):
    manifest = json.loads((run3 / "manifest.json").read_text())
    assert {"synth", "iter1", "iter2", "iter3"} <= set(manifest["stages"])
    for k in (1, 2, 3):
        arts = manifest["stages"][f"iter{k}"]["artifacts"]
        assert all(a["path"].startswith(f"iter{k}/") for a in arts.values())
        assert len(read_jsonl(run3 / f"iter{k}" / "candidates.jsonl")) == 800


def test_pass_rate_matches_recount(run3):
    for k in (1, 2, 3):
        cands = read_jsonl(run3 / f"iter{k}" / "candidates.jsonl")
        report = json.loads((run3 / f"iter{k}" / "selection_report.json").read_text())
        assert report["pass_rate"] == sum(c["passed"] for c in cands) / len(cands)
        assert report["pass_rate_pct"] == f"{100 * report['pass_rate']:.1f}%"


def test_identical_scorer_roles_give_ln2(run3):
    diag = json.loads((run3 / "iter1" / "dpo_diagnostics.json").read_text())
    assert diag["n_pairs"] > 0
    assert abs(diag["mean_loss"] - math.log(2)) <= 1e-9


def test_dataset_record_shapes(run3):
    rsft = read_jsonl(run3 / "iter1" / "rsft.jsonl")
    dpo = read_jsonl(run3 / "iter1" / "dpo.jsonl")
    assert rsft and set(rsft[0]) == {"prompt", "response", "meta"}
    assert dpo and list(dpo[0]) == ["prompt", "chosen", "rejected", "objective", "meta"]
    cand = read_jsonl(run3 / "iter1" / "candidates.jsonl")[0]
    assert list(cand)[:5] == ["query_id", "candidate_id", "text", "scores", "passed"]
    assert set(cand["scores"]) == {"attr", "robust_log_ratio", "compre", "holistic"}


def test_report_table(run3, capsys):
    assert main(["--workspace", str(run3), "report"]) == 0
    out = capsys.readouterr().out
    rows = [ln for ln in out.splitlines() if ln.startswith("iter")]
    assert len(rows) == 3
    assert all(ln.split()[3].endswith("%") for ln in rows)


def test_report_warns_on_digest_mismatch(tmp_path, capsys):
    ws = full_run(tmp_path, n_queries=6, iterations=1, extra=("--seed", "1"))
    with open(ws / "iter1" / "rsft.jsonl", "a") as fh:
        fh.write("\n")
    assert main(["--workspace", str(ws), "report"]) == 0
    assert "WARNING: iter1: digest mismatch for iter1/rsft.jsonl" in capsys.readouterr().out


def test_rerun_is_noop_unless_forced(tmp_path, capsys):
    ws = full_run(tmp_path, n_queries=6, iterations=1)
    before = tree_digest(ws)
    capsys.readouterr()
    assert cli(tmp_path, "iterate", "--iter", "1") == 0
    assert "already complete" in capsys.readouterr().out
    assert cli(tmp_path, "--force", "iterate", "--iter", "1") == 0
    assert "already complete" not in capsys.readouterr().out
    assert tree_digest(ws) == before


def test_unreachable_generator_exits_2_without_files(tmp_path, monkeypatch):
    q = write_queries(tmp_path / "queries.jsonl", 3)
    for role in ("GENERATOR", "POLICY_SCORER", "REFERENCE_SCORER", "JUDGE"):
        monkeypatch.setenv(f"ATTRFORGE_{role}_URL", "http://127.0.0.1:9")
    ws = tmp_path / "ws"
    assert main(["--workspace", str(ws), "synth", "--queries", str(q)]) == 2
    assert not (ws / "synth").exists()
    assert not (ws / "manifest.json").exists()


def test_validation_errors_exit_1(tmp_path, capsys):
    assert main(["--workspace", str(tmp_path / "ws"), "synth", "--queries", "nope.jsonl"]) == 1
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"query_id": "a", "query": "ok"}\nnot json\n')
    assert main(["--mock", "--workspace", str(tmp_path / "ws"), "synth", "--queries", str(bad)]) == 1
    assert "bad.jsonl:2" in capsys.readouterr().err
    assert main(["--mock", "--workspace", str(tmp_path / "ws"), "iterate", "--iter", "1"]) == 1


def test_flags_work_before_and_after_subcommand(tmp_path):
    q = write_queries(tmp_path / "queries.jsonl", 4)
    assert main(["synth", "--mock", "--workspace", str(tmp_path / "a"), "--queries", str(q)]) == 0
    assert main(["--mock", "--workspace", str(tmp_path / "b"), "synth", "--queries", str(q)]) == 0
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_eval_micro_corpus(tmp_path, capsys):
    ws = tmp_path / "ws"
    assert main(["--mock", "--workspace", str(ws), "eval", "--predictions", str(FIXTURES / "micro_corpus.jsonl")]) == 0
    out = capsys.readouterr().out
    assert "Correctness" in out and "Citation Rec." in out
    report = json.loads((ws / "eval" / "report.json").read_text())
    assert report["n_examples"] == 12
    manifest = json.loads((ws / "manifest.json").read_text())
    assert set(manifest["stages"]["eval"]["artifacts"]) == {"report.json", "report.txt"}


def test_eval_missing_ids(tmp_path, capsys):
    preds = tmp_path / "preds.jsonl"
    preds.write_text("")
    gold = tmp_path / "gold.jsonl"
    gold.write_text('{"query_id": "a", "docs": [], "gold": {"answer": "yes"}}\n{"query_id": "b"}\n')
    code = main(["--mock", "--workspace", str(tmp_path / "ws"), "eval", "--predictions", str(preds), "--gold", str(gold)])
    assert code == 1
    assert "missing predictions for ids: a, b" in capsys.readouterr().err


def test_eval_adapters(tmp_path):
    docs = [{"title": "", "text": "Curiosity outlasted Spirit on Mars."}]
    rows = [
        {"query_id": "s1", "response": "No. Curiosity outlasted Spirit [1].", "docs": docs, "gold": {"answer": False}},
    ]
    preds = tmp_path / "p.jsonl"
    preds.write_text("".join(json.dumps(r) + "\n" for r in rows))
    assert main(["--mock", "--workspace", str(tmp_path / "ws"), "eval", "--adapter", "strategyqa", "--predictions", str(preds)]) == 0
    report = json.loads((tmp_path / "ws" / "eval" / "report.json").read_text())
    assert report["macro"]["correctness"] == 1.0


def test_config_precedence(tmp_path):
    toml = tmp_path / "run.toml"
    toml.write_text('seed = 5\nparallelism = 2\n[backends.judge]\nurl = "http://file"\n[selection]\nn_candidates = 4\n')
    cfg = load_config(toml, {"global_seed": 9}, env={"ATTRFORGE_JUDGE_URL": "http://env"})
    assert cfg.global_seed == 9
    assert cfg.parallelism == 2
    assert cfg.selection.n_candidates == 4
    assert cfg.backends["judge"].url == "http://env"
    other = tmp_path / "other.toml"
    other.write_text("seed = 3\n")
    assert load_config(toml, env={"ATTRFORGE_CONFIG": str(other)}).global_seed == 3


def test_config_rejects_unknown_keys(tmp_path):
    toml = tmp_path / "run.toml"
    toml.write_text("[selection]\nn_candidate = 4\n")
    with pytest.raises(ConfigError):
        load_config(toml, env={})
    toml.write_text("sed = 1\n")
    with pytest.raises(ConfigError):
        load_config(toml, env={})


def test_snapshot_masks_tokens(tmp_path):
    cfg = load_config(None, {"workspace": tmp_path / "ws"}, env={"ATTRFORGE_JUDGE_TOKEN": "secret"})
    snap = cfg.snapshot()
    assert snap["backends"]["judge"]["token"] == "***"
    assert "secret" not in json.dumps(snap)


def test_parallelism_does_not_change_outputs(tmp_path):
    a = full_run(tmp_path / "a", n_queries=8, iterations=1)
    b = full_run(tmp_path / "b", n_queries=8, iterations=1, extra=("--parallelism", "4"))
    da, db = tree_digest(a), tree_digest(b)
    da.pop("manifest.json")
    db.pop("manifest.json")
    assert da == db


def test_schema_error_carries_line():
    err = SchemaError("f.jsonl", 7, "bad")
    assert str(err) == "f.jsonl:7: bad" and err.line == 7
