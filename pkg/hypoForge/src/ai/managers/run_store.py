#!/usr/bin/env python3
"""
Run Store - the on-disk layout of one pipeline run

runs/<run_id>/
    manifest.json        config snapshot, corpus digest, backend ids, outputs
    .lock                held by the process that owns the run
    pipeline.log
    corpus.json, charts/, charts.csv, extraction_report.json,
    pairs.json, hypotheses.jsonl, evaluations.jsonl,
    chunk_ideas.json, ideas.json, coverage.json,
    normalized/, graphs/, audit.json, report.txt, report.json

Run ids are derived from the config snapshot and the corpus digest, so the
same inputs land on the same id; an existing directory is only reused with
resume, otherwise a numbered sibling is created.
"""

import hashlib
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

from data_loader import CorpusStore

MANIFEST = "manifest.json"
LOCK_FILE = ".lock"
RUN_ID_LENGTH = 12


class RunLockedError(RuntimeError):
    """Another process holds the run directory."""


def _canonical(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def corpus_digest(corpus: CorpusStore) -> str:
    """SHA-256 over the ingested corpus, bodies included."""
    return hashlib.sha256(_canonical(corpus.to_dict()).encode("utf-8")).hexdigest()


def derive_run_id(config_snapshot: Dict[str, Any], digest: str) -> str:
    payload = _canonical({"config": config_snapshot, "corpus": digest})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:RUN_ID_LENGTH]


def resolve_run_id(runs_dir: Path, base_id: str, resume: bool = False,
                   explicit: Optional[str] = None) -> str:
    """
    Pick the directory a run writes to.

    An explicit id is used as given. Otherwise the derived id is reused only
    with resume; a fresh run next to an existing one gets "-2", "-3", ...
    """
    if explicit:
        return explicit
    if resume or not (Path(runs_dir) / base_id).exists():
        return base_id
    n = 2
    while (Path(runs_dir) / f"{base_id}-{n}").exists():
        n += 1
    return f"{base_id}-{n}"


def dump_json(data: Any) -> str:
    """Stable JSON text for artifacts: sorted keys, two-space indent, trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


@dataclass
class RunManifest:
    run_id: str
    config: Dict[str, Any]
    corpus_digest: str
    backend_id: str = ""
    eval_backend_id: str = ""
    created_at: str = field(default_factory=lambda: datetime.now().isoformat())
    stages_completed: List[str] = field(default_factory=list)
    outputs: Dict[str, List[str]] = field(default_factory=dict)

    def record_stage(self, stage: str, outputs: List[str]):
        if stage not in self.stages_completed:
            self.stages_completed.append(stage)
        self.outputs[stage] = sorted(outputs)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        return cls(**data)


class RunStore:
    """Artifact I/O for one run directory."""

    def __init__(self, runs_dir: Path, run_id: str):
        self.runs_dir = Path(runs_dir)
        self.run_id = run_id
        self.root = self.runs_dir / run_id
        self.logger = logging.getLogger(__name__)
        self._lock_held = False

    def path(self, name: str) -> Path:
        return self.root / name

    def exists(self, name: str = "") -> bool:
        return (self.root / name).exists() if name else self.root.is_dir()

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        self.logger.debug(f"Wrote {path}")
        return path

    def read_text(self, name: str) -> str:
        return self.path(name).read_text(encoding="utf-8")

    def write_json(self, name: str, data: Any) -> Path:
        return self.write_text(name, dump_json(data))

    def read_json(self, name: str) -> Any:
        with open(self.path(name), "r", encoding="utf-8") as f:
            return json.load(f)

    def files(self, subdir: str, pattern: str = "*") -> List[Path]:
        directory = self.path(subdir)
        return sorted(directory.glob(pattern)) if directory.is_dir() else []

    def load_manifest(self) -> Optional[RunManifest]:
        if not self.exists(MANIFEST):
            return None
        return RunManifest.from_dict(self.read_json(MANIFEST))

    def save_manifest(self, manifest: RunManifest):
        self.write_json(MANIFEST, manifest.to_dict())

    def _lock_owner(self) -> Optional[int]:
        try:
            pid = int(self.path(LOCK_FILE).read_text(encoding="utf-8").strip())
        except (OSError, ValueError):
            return None
        return pid if pid > 0 else None

    def _clear_stale_lock(self) -> bool:
        """Remove a lock whose recorded process is gone; an unreadable lock counts as held."""
        pid = self._lock_owner()
        if pid is None or pid == os.getpid():
            return False
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            self.logger.warning(f"Run {self.run_id}: removing stale lock left by process {pid}")
            self.path(LOCK_FILE).unlink(missing_ok=True)
            return True
        except OSError:
            return False
        return False

    def acquire_lock(self):
        """
        Take the run's lock file, recording this process id in it.

        A lock left by a process that no longer exists is removed first.

        Raises:
            RunLockedError: The lock file exists and its owner is alive or unknown
        """
        self.root.mkdir(parents=True, exist_ok=True)
        lock_path = self.path(LOCK_FILE)
        try:
            fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            if not self._clear_stale_lock():
                raise RunLockedError(f"Run {self.run_id} is locked ({lock_path}); "
                                     f"held by process {self._lock_owner() or 'unknown'}")
            try:
                fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                raise RunLockedError(f"Run {self.run_id} is locked ({lock_path}); "
                                     f"another process took it first")
        with os.fdopen(fd, "w") as f:
            f.write(str(os.getpid()))
        self._lock_held = True
        self.logger.debug(f"Locked run {self.run_id}")

    def release_lock(self):
        if self._lock_held:
            self.path(LOCK_FILE).unlink(missing_ok=True)
            self._lock_held = False
            self.logger.debug(f"Released run {self.run_id}")

    @contextmanager
    def locked(self) -> Iterator["RunStore"]:
        self.acquire_lock()
        try:
            yield self
        finally:
            self.release_lock()
