#!/usr/bin/env python3
"""
Paper Corpus Loader for hypoForge

Loads pre-collected, keyword-labeled paper sets from a corpus manifest and
their plain-text bodies, producing the CorpusStore every later stage reads.

Handles:
- Corpus manifest JSON ({sets: [{label, papers: [{title, venue, year, file}]}]})
- UTF-8 plain-text paper bodies under a text root
- Deterministic paper_id assignment in manifest order
"""

import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Any

logger = logging.getLogger(__name__)


class CorpusError(ValueError):
    """Raised when a corpus manifest or its texts violate ingestion rules."""


def token_estimate(text: str) -> int:
    """Approximate token count: whitespace-delimited words x 4/3, rounded down."""
    return len(text.split()) * 4 // 3


@dataclass(frozen=True)
class PaperRecord:
    """A single paper with its keyword-set label and full text."""

    paper_id: int  # 1-based, manifest order
    set_label: str
    title: str
    venue: str
    year: int
    body_text: str
    token_estimate: int = 0

    def __str__(self) -> str:
        return f"[{self.paper_id}] {self.title} ({self.venue}, {self.year}) - {self.set_label}"


@dataclass
class CorpusStore:
    """All ingested papers and the set partition (set label -> ordered paper ids)."""

    papers: List[PaperRecord] = field(default_factory=list)
    sets: Dict[str, List[int]] = field(default_factory=dict)

    def paper(self, paper_id: int) -> PaperRecord:
        for paper in self.papers:
            if paper.paper_id == paper_id:
                return paper
        raise KeyError(f"Unknown paper_id: {paper_id}")

    def set_of(self, paper_id: int) -> str:
        for label, ids in self.sets.items():
            if paper_id in ids:
                return label
        raise KeyError(f"Paper {paper_id} belongs to no set")

    def papers_in(self, set_label: str) -> List[PaperRecord]:
        if set_label not in self.sets:
            raise KeyError(f"Unknown set label: {set_label}")
        return [self.paper(pid) for pid in self.sets[set_label]]

    @property
    def paper_ids(self) -> List[int]:
        return [p.paper_id for p in self.papers]

    def to_dict(self) -> Dict[str, Any]:
        """Convert store to dictionary for serialization."""
        return {
            "papers": [asdict(p) for p in self.papers],
            "sets": [{"label": label, "paper_ids": ids} for label, ids in self.sets.items()],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CorpusStore":
        papers = [PaperRecord(**p) for p in data["papers"]]
        sets = {entry["label"]: list(entry["paper_ids"]) for entry in data["sets"]}
        return cls(papers=papers, sets=sets)


class CorpusLoader:
    """Loads a corpus manifest and the paper texts it references."""

    def __init__(self, manifest_path: Path, text_root: Path):
        self.manifest_path = Path(manifest_path)
        self.text_root = Path(text_root)
        self.logger = logging.getLogger(__name__)

    def load(self) -> CorpusStore:
        """
        Ingest every set in the manifest.

        Returns:
            CorpusStore with paper ids 1..N assigned in manifest order

        Raises:
            CorpusError: Fewer than two sets, an empty set, or a missing text file
        """
        self.logger.info(f"Loading corpus manifest {self.manifest_path}")
        manifest = self._read_manifest()

        set_entries = manifest.get("sets", [])
        if len(set_entries) < 2:
            raise CorpusError(f"need ≥2 sets, manifest lists {len(set_entries)}")

        store = CorpusStore()
        next_id = 1
        for entry in set_entries:
            label = str(entry.get("label", "")).strip()
            if not label:
                raise CorpusError("Set label must be non-empty")
            if label in store.sets:
                raise CorpusError(f"Duplicate set label: {label}")

            papers = entry.get("papers", [])
            if not papers:
                raise CorpusError(f"Set '{label}' is empty")

            store.sets[label] = []
            seen_titles = set()
            for paper_entry in papers:
                record = self._load_paper(next_id, label, paper_entry)
                title_key = record.title.casefold()
                if title_key in seen_titles:
                    self.logger.warning(f"Duplicate title in set '{label}': {record.title}")
                seen_titles.add(title_key)

                store.papers.append(record)
                store.sets[label].append(record.paper_id)
                next_id += 1

        self._log_summary(store)
        return store

    def _read_manifest(self) -> Dict[str, Any]:
        if not self.manifest_path.exists():
            raise CorpusError(f"Corpus manifest not found: {self.manifest_path}")
        with open(self.manifest_path, "r", encoding="utf-8") as f:
            try:
                return json.load(f)
            except json.JSONDecodeError as e:
                raise CorpusError(f"Corpus manifest is not valid JSON: {e}") from e

    def _load_paper(self, paper_id: int, label: str, entry: Dict[str, Any]) -> PaperRecord:
        title = str(entry.get("title", "")).strip()
        text_path = self.text_root / str(entry.get("file", ""))
        if not entry.get("file") or not text_path.is_file():
            raise CorpusError(f"Text file missing for paper '{title}': {text_path}")

        body = text_path.read_text(encoding="utf-8")
        if not body.strip():
            raise CorpusError(f"Text file is empty for paper '{title}': {text_path}")

        return PaperRecord(
            paper_id=paper_id,
            set_label=label,
            title=title,
            venue=str(entry.get("venue", "")),
            year=int(entry.get("year", 0)),
            body_text=body,
            token_estimate=token_estimate(body),
        )

    def _log_summary(self, store: CorpusStore):
        sizes = {label: len(ids) for label, ids in store.sets.items()}
        total_tokens = sum(p.token_estimate for p in store.papers)
        self.logger.info(
            f"Loaded {len(store.papers)} papers in {len(store.sets)} sets {sizes}, "
            f"~{total_tokens} tokens"
        )


def ingest_corpus(manifest_path: Path, text_root: Path) -> CorpusStore:
    """Ingest a corpus manifest and its texts into a CorpusStore."""
    return CorpusLoader(manifest_path, text_root).load()
