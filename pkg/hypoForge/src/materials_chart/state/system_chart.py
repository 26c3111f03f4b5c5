#!/usr/bin/env python3
"""
Materials System Chart

Typed model of a per-paper system chart: one linearized
Processing-Mechanism-Structure-Mechanism-Property row per extracted structure,
with every mechanism labeled by where it came from (the paper itself or the
model's background knowledge).

The chart is assembled from two sub-tables that share the structure column:
Sub-table 1 (property, structure->property mechanism, structure) and
Sub-table 2 (structure, processing->structure mechanism, processing).
"""

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from data_loader import token_estimate

logger = logging.getLogger(__name__)

NA = "N/A"

CSV_COLUMNS = [
    "Paper", "Processing", "Mechanism(P→S)", "Source", "Structure",
    "Mechanism(S→P)", "Source", "Property",
]


class MechanismSource(str, Enum):
    """Provenance of an extracted mechanism."""
    FROM_TEXT = "FromText"
    FROM_KNOWLEDGE_BASE = "FromKnowledgeBase"

    @property
    def label(self) -> str:
        return "From text" if self is MechanismSource.FROM_TEXT else "From knowledge base"


@dataclass(frozen=True)
class Mechanism:
    text: str
    source: MechanismSource = MechanismSource.FROM_TEXT

    def render(self) -> str:
        return f"{self.text} ({self.source.label})"

    def to_dict(self) -> Dict[str, str]:
        return {"text": self.text, "source": self.source.value}

    @classmethod
    def from_dict(cls, data: Dict[str, str]) -> "Mechanism":
        return cls(text=data["text"], source=MechanismSource(data["source"]))


def normalize_structure(structure: str) -> str:
    """Join key for structures: trimmed and case-folded, nothing fuzzier."""
    return structure.strip().casefold()


def is_na(value: str) -> bool:
    return value.strip().upper() == NA


@dataclass(frozen=True)
class ChartRow:
    """One P-M-S-M-P row; `structure` is the row's join key."""
    processing: str
    mech_ps: Mechanism
    structure: str
    mech_sp: Mechanism
    property: str
    row_index: int

    def __post_init__(self):
        if not self.structure.strip():
            raise ValueError(f"Chart row {self.row_index} has an empty structure")

    def cells(self) -> List[str]:
        """The five display cells, mechanisms carrying their source suffix."""
        return [self.processing, self.mech_ps.render(), self.structure,
                self.mech_sp.render(), self.property]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "row_index": self.row_index,
            "processing": self.processing,
            "mech_ps": self.mech_ps.to_dict(),
            "structure": self.structure,
            "mech_sp": self.mech_sp.to_dict(),
            "property": self.property,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ChartRow":
        return cls(
            processing=data["processing"],
            mech_ps=Mechanism.from_dict(data["mech_ps"]),
            structure=data["structure"],
            mech_sp=Mechanism.from_dict(data["mech_sp"]),
            property=data["property"],
            row_index=int(data["row_index"]),
        )


@dataclass
class SystemChart:
    """A paper's system chart."""
    paper_id: int
    rows: List[ChartRow] = field(default_factory=list)
    chart_token_estimate: int = 0

    def row(self, row_index: int) -> ChartRow:
        for row in self.rows:
            if row.row_index == row_index:
                return row
        raise KeyError(f"Paper {self.paper_id} has no row {row_index}")

    def to_table(self) -> str:
        """Pipe-delimited table with header, the same layout the extraction replies use."""
        lines = [
            "| Processing | Mechanism (P→S) | Structure | Mechanism (S→P) | Property |",
            "|---|---|---|---|---|",
        ]
        lines.extend("| " + " | ".join(row.cells()) + " |" for row in self.rows)
        return "\n".join(lines)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "paper_id": self.paper_id,
            "chart_token_estimate": self.chart_token_estimate,
            "rows": [row.to_dict() for row in self.rows],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SystemChart":
        return cls(
            paper_id=int(data["paper_id"]),
            rows=[ChartRow.from_dict(r) for r in data["rows"]],
            chart_token_estimate=int(data.get("chart_token_estimate", 0)),
        )


@dataclass(frozen=True)
class SubTable1Row:
    property: str
    mech_sp: Mechanism
    structure: str


@dataclass(frozen=True)
class SubTable2Row:
    structure: str
    mech_ps: Mechanism
    processing: str


@dataclass
class SubTable1:
    """Property -> mechanism -> structure triples of one paper."""
    paper_id: int
    rows: List[SubTable1Row] = field(default_factory=list)

    def structures(self) -> List[str]:
        """Distinct structures in first-seen order."""
        seen: Dict[str, str] = {}
        for row in self.rows:
            seen.setdefault(normalize_structure(row.structure), row.structure.strip())
        return list(seen.values())


@dataclass
class SubTable2:
    """Structure -> mechanism -> processing triples of one paper."""
    paper_id: int
    rows: List[SubTable2Row] = field(default_factory=list)


def _combine(values: Sequence[str]) -> str:
    distinct: List[str] = []
    for value in values:
        value = value.strip()
        if value and value not in distinct:
            distinct.append(value)
    return "; ".join(distinct)


def _combine_mechanisms(mechanisms: Sequence[Mechanism]) -> Mechanism:
    return Mechanism(text=_combine([m.text for m in mechanisms]), source=mechanisms[0].source)


def join_subtables(st1: SubTable1, st2: SubTable2) -> SystemChart:
    """
    Connect the two sub-tables of one paper into its system chart.

    One row per distinct Sub-table 1 structure, matched to Sub-table 2 on the
    trimmed, case-folded structure string. Repeated entries for one structure
    are combined into a single "; "-delimited cell (split again before
    drawing). Unmatched structures get processing "N/A".

    Raises:
        ValueError: The sub-tables belong to different papers
    """
    if st1.paper_id != st2.paper_id:
        raise ValueError(f"Sub-tables from different papers: {st1.paper_id} vs {st2.paper_id}")

    by_structure_1: Dict[str, List[SubTable1Row]] = {}
    for row in st1.rows:
        by_structure_1.setdefault(normalize_structure(row.structure), []).append(row)

    by_structure_2: Dict[str, List[SubTable2Row]] = {}
    for row in st2.rows:
        by_structure_2.setdefault(normalize_structure(row.structure), []).append(row)

    rows: List[ChartRow] = []
    for index, structure in enumerate(st1.structures(), start=1):
        key = normalize_structure(structure)
        props = by_structure_1[key]
        procs = by_structure_2.get(key, [])

        if procs:
            processing = _combine([p.processing for p in procs]) or NA
            mech_ps = _combine_mechanisms([p.mech_ps for p in procs])
        else:
            logger.warning(f"Paper {st1.paper_id}: no processing matched structure '{structure}'")
            processing = NA
            mech_ps = Mechanism(text="No processing route reported for this structure",
                                source=MechanismSource.FROM_KNOWLEDGE_BASE)

        rows.append(ChartRow(
            processing=processing,
            mech_ps=mech_ps,
            structure=structure,
            mech_sp=_combine_mechanisms([p.mech_sp for p in props]),
            property=_combine([p.property for p in props]) or NA,
            row_index=index,
        ))

    chart = SystemChart(paper_id=st1.paper_id, rows=rows)
    chart.chart_token_estimate = token_estimate(chart.to_table())
    return chart


def validate_chart(chart: SystemChart) -> List[str]:
    """Warnings for a chart; never mutates it."""
    warnings: List[str] = []

    seen: Dict[str, int] = {}
    for row in chart.rows:
        key = normalize_structure(row.structure)
        if key in seen:
            warnings.append(
                f"duplicate structure '{row.structure}' in rows {seen[key]} and {row.row_index}"
            )
        else:
            seen[key] = row.row_index

        if not row.mech_ps.text.strip():
            warnings.append(f"empty mechanism (P→S) in row {row.row_index}")
        if not row.mech_sp.text.strip():
            warnings.append(f"empty mechanism (S→P) in row {row.row_index}")
        if is_na(row.structure):
            warnings.append(f"structure is N/A in row {row.row_index}")
        if is_na(row.processing) and is_na(row.property):
            warnings.append(f"all-N/A row {row.row_index}")

    mechanisms = [m for row in chart.rows for m in (row.mech_ps, row.mech_sp)]
    from_kb = sum(1 for m in mechanisms if m.source is MechanismSource.FROM_KNOWLEDGE_BASE)
    if mechanisms and from_kb * 2 > len(mechanisms):
        warnings.append(
            f"majority of mechanisms from knowledge base ({from_kb}/{len(mechanisms)})"
        )

    return warnings


def knowledge_base_share(chart: SystemChart) -> float:
    mechanisms = [m for row in chart.rows for m in (row.mech_ps, row.mech_sp)]
    if not mechanisms:
        return 0.0
    return sum(m.source is MechanismSource.FROM_KNOWLEDGE_BASE for m in mechanisms) / len(mechanisms)


def write_charts_csv(charts: Sequence[SystemChart], path: Path):
    """Combined charts table, RFC-4180 quoting, rows ordered by paper_id then row_index."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(CSV_COLUMNS)
        for chart in sorted(charts, key=lambda c: c.paper_id):
            for row in sorted(chart.rows, key=lambda r: r.row_index):
                writer.writerow([
                    chart.paper_id, row.processing, row.mech_ps.text, row.mech_ps.source.label,
                    row.structure, row.mech_sp.text, row.mech_sp.source.label, row.property,
                ])


def find_row(charts: Sequence[SystemChart], paper_id: int, row_index: int) -> Optional[ChartRow]:
    for chart in charts:
        if chart.paper_id == paper_id:
            try:
                return chart.row(row_index)
            except KeyError:
                return None
    return None
