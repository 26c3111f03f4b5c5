#!/usr/bin/env python3
"""
Hypothesis, Evaluation and Idea Records

Data model for everything downstream of the system charts: generated
hypotheses with their source-row provenance, the two evaluations each
hypothesis receives, and the ideas produced by categorization.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple


@dataclass(frozen=True)
class RowRef:
    """Address of one chart row."""
    paper_id: int
    row_index: int

    def to_list(self) -> List[int]:
        return [self.paper_id, self.row_index]


@dataclass(frozen=True)
class RowPair:
    """One row from set A paired with one row from set B."""
    pair_id: int
    a: RowRef
    b: RowRef

    def to_dict(self) -> Dict[str, Any]:
        return {"pair_id": self.pair_id, "a": self.a.to_list(), "b": self.b.to_list()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RowPair":
        return cls(pair_id=int(data["pair_id"]), a=RowRef(*data["a"]), b=RowRef(*data["b"]))


@dataclass
class Hypothesis:
    """A generated hypothesis; hypothesis_id is 0 until assign_ids runs."""
    pair: RowPair
    text: str
    cited_papers: List[int] = field(default_factory=list)
    combined_structures: List[str] = field(default_factory=list)
    linked_mechanisms: Optional[Tuple[str, str]] = None  # ("P->S"|"S->P" of row a, of row b)
    sample_index: int = 0
    hypothesis_id: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hypothesis_id": self.hypothesis_id,
            "pair": self.pair.to_dict(),
            "text": self.text,
            "cited_papers": self.cited_papers,
            "combined_structures": self.combined_structures,
            "linked_mechanisms": list(self.linked_mechanisms) if self.linked_mechanisms else None,
            "sample_index": self.sample_index,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Hypothesis":
        linked = data.get("linked_mechanisms")
        return cls(
            hypothesis_id=int(data["hypothesis_id"]),
            pair=RowPair.from_dict(data["pair"]),
            text=data["text"],
            cited_papers=list(data.get("cited_papers", [])),
            combined_structures=list(data.get("combined_structures", [])),
            linked_mechanisms=tuple(linked) if linked else None,
            sample_index=int(data.get("sample_index", 0)),
        )


class SynergyLabel(str, Enum):
    SYNERGISTIC = "Synergistic"
    ADDITIVE = "Additive"


class GroundingLabel(str, Enum):
    STRONG = "Strong"
    WEAK = "Weak"


@dataclass
class SynergyEvaluation:
    hypothesis_id: int
    score: int
    label: SynergyLabel
    interdependence_sentences: List[str] = field(default_factory=list)
    core_structures: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.label is SynergyLabel.SYNERGISTIC and not self.interdependence_sentences:
            raise ValueError(
                f"Hypothesis {self.hypothesis_id}: Synergistic without interdependence sentences"
            )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "score": self.score,
            "label": self.label.value,
            "interdependence_sentences": self.interdependence_sentences,
            "core_structures": self.core_structures,
        }


@dataclass
class GroundingEvaluation:
    hypothesis_id: int
    label: GroundingLabel
    rationale: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {"label": self.label.value, "rationale": self.rationale}


@dataclass
class EvaluationRecord:
    """Both evaluations of one hypothesis; None marks an unevaluated criterion."""
    hypothesis_id: int
    synergy: Optional[SynergyEvaluation] = None
    grounding: Optional[GroundingEvaluation] = None

    @property
    def evaluated(self) -> bool:
        return self.synergy is not None and self.grounding is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hypothesis_id": self.hypothesis_id,
            "synergy": self.synergy.to_dict() if self.synergy else None,
            "grounding": self.grounding.to_dict() if self.grounding else None,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvaluationRecord":
        hid = int(data["hypothesis_id"])
        syn = data.get("synergy")
        grd = data.get("grounding")
        return cls(
            hypothesis_id=hid,
            synergy=SynergyEvaluation(
                hypothesis_id=hid,
                score=int(syn["score"]),
                label=SynergyLabel(syn["label"]),
                interdependence_sentences=list(syn.get("interdependence_sentences", [])),
                core_structures=list(syn.get("core_structures", [])),
            ) if syn else None,
            grounding=GroundingEvaluation(
                hypothesis_id=hid,
                label=GroundingLabel(grd["label"]),
                rationale=grd.get("rationale", ""),
            ) if grd else None,
        )


@dataclass
class Idea:
    """A category of hypotheses sharing structural entities and a core concept."""
    idea_id: int
    member_hypotheses: List[int]
    structural_entities: List[str] = field(default_factory=list)
    core_concept: str = ""
    source_pair_signature: Set[Tuple[int, int]] = field(default_factory=set)

    def __post_init__(self):
        if not self.member_hypotheses:
            raise ValueError(f"Idea {self.idea_id} has no member hypotheses")
        self.member_hypotheses = sorted(set(self.member_hypotheses))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "idea_id": self.idea_id,
            "member_hypotheses": self.member_hypotheses,
            "structural_entities": self.structural_entities,
            "core_concept": self.core_concept,
            "source_pair_signature": sorted(list(p) for p in self.source_pair_signature),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Idea":
        return cls(
            idea_id=int(data["idea_id"]),
            member_hypotheses=list(data["member_hypotheses"]),
            structural_entities=list(data.get("structural_entities", [])),
            core_concept=data.get("core_concept", ""),
            source_pair_signature={tuple(p) for p in data.get("source_pair_signature", [])},
        )


@dataclass
class CategorizationState:
    ideas: List[Idea] = field(default_factory=list)
    halted: bool = False
    dropped_hypotheses: List[int] = field(default_factory=list)
    turn_budget_exhausted: bool = False

    @property
    def covered_hypotheses(self) -> Set[int]:
        return {hid for idea in self.ideas for hid in idea.member_hypotheses}


def write_jsonl(records: Iterable[Dict[str, Any]], path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: Path) -> List[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
