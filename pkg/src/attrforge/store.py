"""Workspace persistence: JSONL I/O, content digests, atomic stages, the run manifest.

A stage writes its artifacts into a hidden temporary directory, renames that
directory into place, and finally replaces ``manifest.json`` atomically. The
manifest entry is the commit point: a stage directory with no manifest entry
is an interrupted run and is discarded the next time that stage runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any, Iterable

MANIFEST = "manifest.json"


class SchemaError(ValueError):
    """A malformed input record; ``line`` is 1-based."""

    def __init__(self, path: str | Path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


def dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False)


def jsonl_text(records: Iterable[Any]) -> str:
    return "".join(dumps(r) + "\n" for r in records)


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(path, i, f"invalid JSON ({e.msg})") from e
            if not isinstance(rec, dict):
                raise SchemaError(path, i, "expected a JSON object")
            out.append(rec)
    return out


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Manifest:
    def __init__(self, workspace: str | Path):
        self.workspace = Path(workspace)
        self.path = self.workspace / MANIFEST
        if self.path.exists():
            self.data = json.loads(self.path.read_text(encoding="utf-8"))
        else:
            self.data = {"run_id": None, "config": None, "stages": {}, "timings": {}}

    @property
    def stages(self) -> dict[str, dict]:
        return self.data["stages"]

    def save(self) -> None:
        atomic_write_text(self.path, json.dumps(self.data, indent=2, ensure_ascii=False) + "\n")

    def verify(self, stage: str) -> list[str]:
        """Problems with a stage's recorded artifacts (missing files, digest mismatches)."""
        problems = []
        for name, art in self.stages.get(stage, {}).get("artifacts", {}).items():
            p = self.workspace / art["path"]
            if not p.exists():
                problems.append(f"{stage}: missing artifact {art['path']}")
            elif sha256_file(p) != art["sha256"]:
                problems.append(f"{stage}: digest mismatch for {art['path']}")
        return problems

    def is_complete(self, stage: str, inputs: dict[str, str]) -> bool:
        entry = self.stages.get(stage)
        return bool(entry) and entry.get("inputs") == inputs and not self.verify(stage)


class StageWriter:
    """Collects a stage's files and commits them all at once.

    >>> with StageWriter(manifest, "synth") as w:   # doctest: +SKIP
    ...     w.write_jsonl("examples.jsonl", records)
    ...     w.commit(counters={...}, inputs={...})
    """

    def __init__(self, manifest: Manifest, stage: str):
        self.manifest = manifest
        self.stage = stage
        self.final_dir = manifest.workspace / stage
        self.tmp_dir: Path | None = None
        self.files: list[str] = []
        self.committed = False

    def __enter__(self) -> "StageWriter":
        self.manifest.workspace.mkdir(parents=True, exist_ok=True)
        # leftovers of a killed writer; the workspace has a single writer
        for stale in self.manifest.workspace.glob(f".{self.stage}.tmp-*"):
            shutil.rmtree(stale, ignore_errors=True)
        for stale in self.manifest.workspace.glob(f".{MANIFEST}.*.tmp"):
            stale.unlink(missing_ok=True)
        self.tmp_dir = Path(tempfile.mkdtemp(dir=self.manifest.workspace, prefix=f".{self.stage}.tmp-"))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self.tmp_dir is not None and self.tmp_dir.exists():
            shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def write_text(self, name: str, text: str) -> None:
        assert self.tmp_dir is not None
        with open(self.tmp_dir / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.files.append(name)

    def write_jsonl(self, name: str, records: Iterable[Any]) -> None:
        self.write_text(name, jsonl_text(records))

    def write_json(self, name: str, obj: Any) -> None:
        self.write_text(name, json.dumps(obj, indent=2, ensure_ascii=False) + "\n")

    def commit(self, counters: dict | None = None, inputs: dict | None = None, extra: dict | None = None) -> dict:
        assert self.tmp_dir is not None
        artifacts = {
            name: {"path": f"{self.stage}/{name}", "sha256": sha256_file(self.tmp_dir / name)} for name in self.files
        }
        if self.final_dir.exists():
            shutil.rmtree(self.final_dir)
        os.replace(self.tmp_dir, self.final_dir)
        self.tmp_dir = None
        entry = {"artifacts": artifacts, "counters": counters or {}, "inputs": inputs or {}}
        if extra:
            entry.update(extra)
        self.manifest.stages[self.stage] = entry
        self.manifest.save()
        self.committed = True
        return entry
