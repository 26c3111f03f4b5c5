#!/usr/bin/env python3
"""
Chart Extractor - per-paper system chart extraction

Extracts a paper's materials system chart in two sub-tables that share the
structure column:

1. Sub-table 1, a three-turn conversation: target properties, then the
   structures behind them, then a Property | Mechanism (S→P) | Structure table.
2. Sub-table 2, one prompt per paper: for each structure of sub-table 1, the
   processing route and its Structure | Mechanism (P→S) | Processing table.

Every table reply gets one repair reprompt carrying the parser's error text.
"""

import asyncio
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from data_loader import PaperRecord
from llm_gateway.api.llm_client import BackendHandle, LlmGatewayError, LlmRequest, request_digest
from llm_gateway.config import StageProfile
from materials_chart.state.system_chart import (
    NA,
    Mechanism,
    MechanismSource,
    SubTable1,
    SubTable1Row,
    SubTable2,
    SubTable2Row,
    SystemChart,
    join_subtables,
    normalize_structure,
    validate_chart,
)
from materials_chart.utils.table_parser import TableParseError, TableRow, parse_chart_table

SOURCE_INSTRUCTION = (
    'End every mechanism with "(From text)" when the paper states it, or '
    '"(From knowledge base)" when you supply it from your own knowledge.'
)

PROPERTIES_PROMPT = """Read the paper below.

List the target properties the paper reports for its material, including the
qualifier that makes each one notable (test temperature, relative improvement,
trade-off overcome). One property per line, starting with "- ".

PAPER ({paper_id}) {title}
{body}"""

STRUCTURES_PROMPT = """For each property you listed, name the structures (microstructural
features, phases, defects) the paper identifies as responsible for it.
One structure per line, starting with "- "."""

SUBTABLE1_PROMPT = """Now connect the properties and structures into a table with exactly
three columns:

| Property | Mechanism (S→P) | Structure |

One row per property-structure link. The mechanism explains how the structure
produces the property. {source_instruction}
Reply with the table only."""

SUBTABLE2_PROMPT = """Read the paper below.

For each structure listed, identify the processing method (with its key
parameters) the paper uses to achieve it, and the mechanism by which that
processing forms the structure. Reply with a table with exactly three columns:

| Structure | Mechanism (P→S) | Processing |

Use each listed structure verbatim in the Structure column. {source_instruction}
If the paper reports no processing for a structure, write N/A as its
processing and give a mechanism (From knowledge base).
Reply with the table only.

STRUCTURES
{structures}

PAPER ({paper_id}) {title}
{body}"""

REPAIR_PROMPT = """Your table could not be parsed: {error}
Reply again with only the table, exactly {columns} columns per row, every cell separated by "|"."""

NO_PROCESSING_NOTE = "No processing route reported for this structure"


class ExtractionError(RuntimeError):
    """A table reply stayed unparseable after the repair reprompt."""

    def __init__(self, message: str, digest: str = ""):
        super().__init__(f"{message} (request {digest[:12]})" if digest else message)
        self.digest = digest


@dataclass
class ExtractionOutcome:
    """Result of one paper's extraction; chart is None on failure."""
    paper_id: int
    chart: Optional[SystemChart] = None
    warnings: Optional[List[str]] = None
    error: Optional[str] = None

    @property
    def succeeded(self) -> bool:
        return self.chart is not None


class ChartExtractor:
    """
    System chart extraction for a corpus.

    Papers are extracted concurrently; the gateway bounds the number of
    requests in flight.
    """

    def __init__(self, backend: BackendHandle, profile: StageProfile):
        """
        Initialize the extractor.

        Args:
            backend: Gateway-bound backend handle
            profile: Extraction stage profile
        """
        self.backend = backend
        self.profile = profile
        self.logger = logging.getLogger(__name__)

    async def _table_reply(self, request: LlmRequest, columns: int,
                           what: str) -> List[TableRow]:
        """Send a table request, repairing once on a parse failure."""
        response = await self.backend.complete(request)
        if response.truncated:
            self.logger.warning(f"{what}: reply hit the token cap, keeping its complete rows")
        try:
            return parse_chart_table(response.text, columns, mechanism_columns=(1,),
                                     truncated=response.truncated)
        except TableParseError as e:
            self.logger.warning(f"{what}: unparseable table ({e}), reprompting once")
            repair = request.followup(response.text, REPAIR_PROMPT.format(error=e, columns=columns))

        response = await self.backend.complete(repair)
        try:
            return parse_chart_table(response.text, columns, mechanism_columns=(1,),
                                     truncated=response.truncated)
        except TableParseError as e:
            digest = request_digest(repair)
            self.logger.error(f"{what}: still unparseable after reprompt: {e}")
            raise ExtractionError(f"{what}: {e}", digest=digest) from e

    async def extract_subtable1(self, paper: PaperRecord) -> SubTable1:
        """
        Extract (property, S→P mechanism, structure) triples.

        Raises:
            ValueError: Paper body is empty
            ExtractionError: Mechanism table unparseable after one reprompt
        """
        if not paper.body_text.strip():
            raise ValueError(f"Paper {paper.paper_id} has an empty body")

        first = self.profile.request(PROPERTIES_PROMPT.format(
            paper_id=paper.paper_id, title=paper.title, body=paper.body_text))
        properties = await self.backend.complete(first)

        second = first.followup(properties.text, STRUCTURES_PROMPT)
        structures = await self.backend.complete(second)

        third = second.followup(structures.text,
                                SUBTABLE1_PROMPT.format(source_instruction=SOURCE_INSTRUCTION))
        rows = await self._table_reply(third, 3, f"Paper {paper.paper_id} sub-table 1")

        table = SubTable1(paper_id=paper.paper_id)
        for row in rows:
            prop, mechanism, structure = row.cells
            if not structure.strip():
                self.logger.warning(f"Paper {paper.paper_id}: dropping row {row.line_number} "
                                    f"without a structure")
                continue
            table.rows.append(SubTable1Row(
                property=prop or NA,
                mech_sp=Mechanism(mechanism, row.sources[1]),
                structure=structure,
            ))
        self.logger.debug(f"Paper {paper.paper_id}: sub-table 1 has {len(table.rows)} rows")
        return table

    async def extract_subtable2(self, paper: PaperRecord, structures: Sequence[str]) -> SubTable2:
        """
        Extract (structure, P→S mechanism, processing) for the given structures.

        Replies naming unrequested structures are dropped; requested structures
        the reply skips get processing N/A with a knowledge-base note.

        Raises:
            ValueError: No structures given
            ExtractionError: Table unparseable after one reprompt
        """
        if not structures:
            raise ValueError(f"Paper {paper.paper_id}: sub-table 2 needs at least one structure")

        request = self.profile.request(SUBTABLE2_PROMPT.format(
            source_instruction=SOURCE_INSTRUCTION,
            structures="\n".join(f"- {s}" for s in structures),
            paper_id=paper.paper_id, title=paper.title, body=paper.body_text,
        ))
        rows = await self._table_reply(request, 3, f"Paper {paper.paper_id} sub-table 2")

        wanted: Dict[str, str] = {normalize_structure(s): s for s in structures}
        table = SubTable2(paper_id=paper.paper_id)
        covered = set()
        for row in rows:
            structure, mechanism, processing = row.cells
            key = normalize_structure(structure)
            if key not in wanted:
                self.logger.warning(f"Paper {paper.paper_id}: ignoring unrequested structure "
                                    f"'{structure}'")
                continue
            covered.add(key)
            table.rows.append(SubTable2Row(
                structure=wanted[key],
                mech_ps=Mechanism(mechanism, row.sources[1]),
                processing=processing or NA,
            ))

        for key, structure in wanted.items():
            if key not in covered:
                self.logger.warning(f"Paper {paper.paper_id}: no processing for '{structure}'")
                table.rows.append(SubTable2Row(
                    structure=structure,
                    mech_ps=Mechanism(NO_PROCESSING_NOTE, MechanismSource.FROM_KNOWLEDGE_BASE),
                    processing=NA,
                ))
        return table

    async def extract_chart(self, paper: PaperRecord) -> Tuple[SystemChart, List[str]]:
        """Both sub-tables joined into the paper's chart, plus its validation warnings."""
        st1 = await self.extract_subtable1(paper)
        if not st1.rows:
            raise ExtractionError(f"Paper {paper.paper_id}: sub-table 1 has no structures")
        st2 = await self.extract_subtable2(paper, st1.structures())
        chart = join_subtables(st1, st2)

        warnings = validate_chart(chart)
        for warning in warnings:
            self.logger.warning(f"Paper {paper.paper_id}: {warning}")
        self.logger.info(f"Paper {paper.paper_id}: chart with {len(chart.rows)} rows")
        return chart, warnings

    async def _extract_safely(self, paper: PaperRecord) -> ExtractionOutcome:
        try:
            chart, warnings = await self.extract_chart(paper)
            return ExtractionOutcome(paper_id=paper.paper_id, chart=chart, warnings=warnings)
        except (ExtractionError, LlmGatewayError, ValueError) as e:
            self.logger.error(f"Paper {paper.paper_id}: extraction failed: {e}")
            return ExtractionOutcome(paper_id=paper.paper_id, warnings=[], error=str(e))

    async def extract_corpus(self, papers: Sequence[PaperRecord]) -> List[ExtractionOutcome]:
        """Extract every paper; outcomes are ordered by paper_id."""
        outcomes = await asyncio.gather(*(self._extract_safely(p) for p in papers))
        succeeded = sum(1 for o in outcomes if o.succeeded)
        self.logger.info(f"Extracted {succeeded}/{len(outcomes)} charts")
        return sorted(outcomes, key=lambda o: o.paper_id)


async def extract_subtable1(paper: PaperRecord, profile: StageProfile,
                            backend: BackendHandle) -> SubTable1:
    return await ChartExtractor(backend, profile).extract_subtable1(paper)


async def extract_subtable2(paper: PaperRecord, structures: Sequence[str],
                            profile: StageProfile, backend: BackendHandle) -> SubTable2:
    return await ChartExtractor(backend, profile).extract_subtable2(paper, structures)
