#!/usr/bin/env python3
"""
Chart Normalizer - preparing charts for drawing

Backend-assisted clean-up applied after rows are split:
- tag_and_simplify: tags each structure with a category and trims parameter
  detail while keeping environmental conditions
- fill_na: replaces N/A structures and properties with values copied from
  sibling rows, when a sibling clearly supplies one
"""

import asyncio
import logging
import re
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

from llm_gateway.api.llm_client import BackendHandle, LlmGatewayError
from llm_gateway.config import StageProfile
from materials_chart.state.system_chart import SystemChart, is_na
from materials_chart.utils.chart_graph import NormalizedChart, NormalizedRow
from materials_chart.utils.table_parser import TableParseError, format_table, parse_chart_table

TAG_PROMPT = """The table below lists rows of a materials system chart.

For every row:
1. Tag the structure with a short category (for example "dislocation
   substructure", "precipitate", "grain boundary").
2. Simplify the processing, structure and property text by removing
   parameter detail, while retaining environmental conditions such as test
   temperature or atmosphere.

Reply with a table with exactly five columns and one row per input row, in
the same order and with the same row numbers:

| Row | Tag | Processing | Structure | Property |

Reply with the table only.

{table}"""

REPAIR_PROMPT = """Your table could not be used: {error}
Reply again with only the table: exactly one row per input row, five columns each."""

FILL_PROMPT = """In the materials system chart below, row {row} has N/A as its {field}.

{table}

If another row clearly supplies the missing {field} for row {row} (for example
because it shares the same processing or structure), reply with two lines:
Fill: <the value, copied verbatim from that row>
Donor: <the row number you copied it from>

Otherwise reply with exactly: keep N/A"""

FILL_FIELDS = ("structure", "property")
_FILL = re.compile(r"^\W*fill\W*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)
_DONOR = re.compile(r"^\W*donor\W*:\D*(\d+)", re.IGNORECASE | re.MULTILINE)
_KEEP = re.compile(r"keep\s+n/?a", re.IGNORECASE)


def _cells(row: NormalizedRow) -> Tuple[str, str, str]:
    return row.processing, row.structure, row.property


class ChartNormalizer:
    """Tagging, simplification and N/A filling for split charts."""

    def __init__(self, backend: BackendHandle, profile: StageProfile):
        self.backend = backend
        self.profile = profile
        self.logger = logging.getLogger(__name__)
        self.rejected_fills = 0

    async def tag_and_simplify(self, chart: SystemChart) -> NormalizedChart:
        """
        Tag and simplify every row, one output row per input row.

        A reply that does not map one-to-one onto the input rows after one
        reprompt falls back to the untagged rows.
        """
        normalized = NormalizedChart.from_chart(chart)
        if not normalized.rows:
            return normalized

        table = format_table(["Row", "Processing", "Structure", "Property"],
                             ([r.row_index, *_cells(r)] for r in normalized.rows))
        request = self.profile.request(TAG_PROMPT.format(table=table))
        expected = [r.row_index for r in normalized.rows]

        try:
            response = await self.backend.complete(request)
            try:
                rows = self._tag_rows(response.text, expected)
            except (TableParseError, ValueError) as e:
                self.logger.warning(f"Paper {chart.paper_id}: tag reply unusable ({e}), reprompting once")
                repair = request.followup(response.text, REPAIR_PROMPT.format(error=e))
                response = await self.backend.complete(repair)
                rows = self._tag_rows(response.text, expected)
        except (TableParseError, ValueError, LlmGatewayError) as e:
            self.logger.warning(f"Paper {chart.paper_id}: keeping untagged rows: {e}")
            return normalized

        tagged = []
        for row in normalized.rows:
            tag, processing, structure, prop = rows[row.row_index]
            tagged.append(replace(
                row,
                structure_tag=tag,
                processing=processing or row.processing,
                structure=structure or row.structure,
                property=prop or row.property,
            ))
        return NormalizedChart(paper_id=chart.paper_id, rows=tagged, tagged=True)

    @staticmethod
    def _tag_rows(raw: str, expected: Sequence[int]) -> Dict[int, Tuple[str, str, str, str]]:
        parsed = parse_chart_table(raw, 5)
        rows: Dict[int, Tuple[str, str, str, str]] = {}
        for row in parsed:
            number = re.sub(r"\D", "", row.cells[0])
            if not number:
                raise ValueError(f"row number missing in line {row.line_number}")
            rows[int(number)] = tuple(row.cells[1:])
        if len(parsed) != len(expected) or sorted(rows) != sorted(expected):
            raise ValueError(f"expected rows {list(expected)}, got {sorted(rows)} in {len(parsed)} lines")
        return rows

    def _siblings(self, chart: NormalizedChart, row: NormalizedRow) -> List[NormalizedRow]:
        """Other rows sharing at least one non-N/A processing/structure/property value."""
        own = {v.strip().casefold() for v in _cells(row) if not is_na(v)}
        return [
            other for other in chart.rows
            if other.row_index != row.row_index
            and own & {v.strip().casefold() for v in _cells(other) if not is_na(v)}
        ]

    async def _fill_cell(self, chart: NormalizedChart, row: NormalizedRow,
                         field: str) -> Optional[Tuple[str, int]]:
        siblings = self._siblings(chart, row)
        if not siblings:
            self.logger.debug(f"Paper {chart.paper_id} row {row.row_index}: no sibling for {field}")
            return None

        shown = sorted([row] + siblings, key=lambda r: r.row_index)
        table = format_table(["Row", "Processing", "Structure", "Property"],
                             ([r.row_index, *_cells(r)] for r in shown))
        request = self.profile.request(FILL_PROMPT.format(row=row.row_index, field=field, table=table))
        try:
            reply = (await self.backend.complete(request)).text
        except LlmGatewayError as e:
            self.logger.warning(f"Paper {chart.paper_id} row {row.row_index}: fill failed: {e}")
            return None

        fill = _FILL.search(reply)
        if fill is None:
            if not _KEEP.search(reply):
                self.logger.warning(f"Paper {chart.paper_id} row {row.row_index}: "
                                    f"unreadable fill reply, keeping N/A")
            return None

        value = fill.group(1).strip().strip("\"'")
        donor_match = _DONOR.search(reply)
        donor_index = int(donor_match.group(1)) if donor_match else None

        if not value or is_na(value):
            return None
        wanted = value.casefold()
        sources = [s for s in siblings if getattr(s, field).strip().casefold() == wanted]
        if not sources:
            self.logger.warning(f"Paper {chart.paper_id} row {row.row_index}: rejecting fill "
                                f"'{value}', no sibling has it as its {field}")
            self.rejected_fills += 1
            return None
        donor = next((s for s in sources if s.row_index == donor_index), sources[0])
        return getattr(donor, field).strip(), donor.row_index

    async def fill_na(self, chart: NormalizedChart) -> NormalizedChart:
        """
        Fill N/A structure and property cells from sibling rows.

        Siblings are judged on the chart as given, so fills never chain.
        Each accepted fill records its donor row.
        """
        targets = [(row, field) for row in chart.rows for field in FILL_FIELDS
                   if is_na(getattr(row, field))]
        if not targets:
            return chart

        results = await asyncio.gather(*(self._fill_cell(chart, row, field)
                                         for row, field in targets))
        fills: Dict[int, Dict[str, Tuple[str, int]]] = {}
        for (row, field), result in zip(targets, results):
            if result is not None:
                fills.setdefault(row.row_index, {})[field] = result

        rows = []
        for row in chart.rows:
            changes = fills.get(row.row_index, {})
            if not changes:
                rows.append(row)
                continue
            filled_from = dict(row.filled_from)
            values = {}
            for field, (value, donor) in changes.items():
                values[field] = value
                filled_from[field] = donor
            rows.append(replace(row, filled_from=filled_from, **values))
            self.logger.info(f"Paper {chart.paper_id} row {row.row_index}: filled "
                             f"{sorted(changes)} from rows {[d for _, d in changes.values()]}")

        return NormalizedChart(paper_id=chart.paper_id, rows=rows, tagged=chart.tagged)


async def tag_and_simplify(chart: SystemChart, profile: StageProfile,
                           backend: BackendHandle) -> NormalizedChart:
    return await ChartNormalizer(backend, profile).tag_and_simplify(chart)


async def fill_na(chart: NormalizedChart, profile: StageProfile,
                  backend: BackendHandle) -> NormalizedChart:
    return await ChartNormalizer(backend, profile).fill_na(chart)
