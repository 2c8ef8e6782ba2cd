"""Workspace helpers shared by the pipeline and acceptance tests."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from attrforge.cli import main

TOPICS = [
    "Why do rivers meander?",
    "How do vaccines train the immune system?",
    "What causes the seasons on Earth?",
    "Why is the sky blue?",
    "How do bees communicate?",
]


def write_queries(path: Path, n: int = 50) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n):
            fh.write(json.dumps({"query_id": f"q{i:03d}", "query": f"{TOPICS[i % len(TOPICS)]} (variant {i})"}) + "\n")
    return path


def cli(root: Path, *args: str) -> int:
    """Run the CLI with a workspace under ``root``."""
    return main(["--mock", "--workspace", str(root / "ws"), *args])


def full_run(root: Path, n_queries: int = 50, iterations: int = 3, extra: tuple[str, ...] = ()) -> Path:
    write_queries(root / "queries.jsonl", n_queries)
    assert cli(root, *extra, "synth", "--queries", str(root / "queries.jsonl")) == 0
    for k in range(1, iterations + 1):
        assert cli(root, *extra, "iterate", "--iter", str(k)) == 0
    return root / "ws"


def tree_digest(root: Path) -> dict[str, str]:
    """Relative path -> sha256 of every file below ``root``."""
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
