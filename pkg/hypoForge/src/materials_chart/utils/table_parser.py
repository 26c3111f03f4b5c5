#!/usr/bin/env python3
"""
Pipe-Delimited Table Parser

Parses the tabular replies the prompts ask for into rows of trimmed cells.
Tolerates the usual reply noise: code fences, prose around the table,
header and separator lines, blank lines, leading/trailing pipes.
Mechanism cells may end in a "(From text)" / "(From knowledge base)"
source suffix, which is stripped off and returned as a MechanismSource.

Arbitrary input either parses or raises a TableParseError subclass.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from ..state.system_chart import MechanismSource

logger = logging.getLogger(__name__)

# First words of header cells across every table the prompts request.
HEADER_ROOTS = (
    "processing", "mechanism", "source", "structure", "microstructure", "property",
    "properties", "idea", "merged idea", "hypothes", "structural entit", "core concept",
    "row", "tag", "simplified", "#", "no.",
)

_SOURCE_SUFFIX = re.compile(
    r"\s*[\(\[]\s*from\s+(text|knowledge\s*base)\s*[\)\]]\s*\.?\s*$", re.IGNORECASE
)


class TableParseError(ValueError):
    """Base class for table parsing failures."""


class RowParseError(TableParseError):
    """A data row with the wrong number of cells."""

    def __init__(self, row: int, line: str, expected: int, found: int):
        super().__init__(f"row {row}: expected {expected} cells, found {found}: {line!r}")
        self.row = row
        self.line = line
        self.expected = expected
        self.found = found


class EmptyTableError(TableParseError):
    """The reply contained no table rows."""


@dataclass
class TableRow:
    """One parsed data row."""
    cells: List[str]
    line_number: int
    sources: Dict[int, MechanismSource] = field(default_factory=dict)


def split_source_label(cell: str) -> Tuple[str, Optional[MechanismSource]]:
    """Strip a trailing source suffix off a mechanism cell."""
    match = _SOURCE_SUFFIX.search(cell)
    if not match:
        return cell.strip(), None
    kind = match.group(1).lower()
    source = MechanismSource.FROM_TEXT if kind == "text" else MechanismSource.FROM_KNOWLEDGE_BASE
    return cell[:match.start()].strip(), source


def _is_separator(line: str) -> bool:
    return "-" in line and set(line) <= set("|-:+ \t")


def _split_cells(line: str) -> List[str]:
    body = line.strip()
    if body.startswith("|"):
        body = body[1:]
    if body.endswith("|"):
        body = body[:-1]
    return [cell.strip() for cell in body.split("|")]


def _is_header(cells: Sequence[str]) -> bool:
    def header_like(cell: str) -> bool:
        text = cell.strip().strip("*_` ").lower()
        return any(text.startswith(root) for root in HEADER_ROOTS)
    return bool(cells) and all(header_like(c) for c in cells)


def _table_lines(raw: str) -> Iterable[Tuple[int, str]]:
    for number, line in enumerate(raw.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("```"):
            continue
        if "|" not in stripped:
            continue
        yield number, stripped


def _drop_cut_off_row(lines: List[Tuple[int, str]],
                      expected_columns: int) -> List[Tuple[int, str]]:
    if not lines:
        return lines
    number, line = lines[-1]
    if len(_split_cells(line)) == expected_columns and line.endswith("|"):
        return lines
    logger.warning(f"Line {number}: reply was cut off mid-row, dropping {line!r}")
    return lines[:-1]


def parse_chart_table(raw: str, expected_columns: int,
                      mechanism_columns: Sequence[int] = (),
                      truncated: bool = False) -> List[TableRow]:
    """
    Parse a pipe-delimited table reply.

    Args:
        raw: Reply text
        expected_columns: Cells every data row must have
        mechanism_columns: 0-based columns whose cells carry a source suffix
        truncated: The reply stopped at the token cap; a last row with the
            wrong cell count or no closing pipe is dropped instead of raising

    Returns:
        Data rows in reply order

    Raises:
        RowParseError: A data row has the wrong number of cells
        EmptyTableError: No data rows were found
    """
    lines = list(_table_lines(raw))
    if truncated:
        lines = _drop_cut_off_row(lines, expected_columns)
    rows: List[TableRow] = []
    first_table_line = True

    for position, (number, line) in enumerate(lines):
        if _is_separator(line):
            continue

        cells = _split_cells(line)
        next_is_separator = position + 1 < len(lines) and _is_separator(lines[position + 1][1])
        if next_is_separator or (first_table_line and _is_header(cells)):
            first_table_line = False
            continue
        first_table_line = False

        if len(cells) != expected_columns:
            raise RowParseError(row=number, line=line, expected=expected_columns, found=len(cells))

        sources: Dict[int, MechanismSource] = {}
        for column in mechanism_columns:
            text, source = split_source_label(cells[column])
            if source is None:
                logger.warning(f"Line {number}: mechanism without source label, assuming From text")
                source = MechanismSource.FROM_TEXT
            cells[column] = text
            sources[column] = source

        rows.append(TableRow(cells=cells, line_number=number, sources=sources))

    if not rows:
        raise EmptyTableError("no rows parsed")
    return rows


def format_table(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    """Render rows as a pipe-delimited table with a header and separator."""
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines.extend("| " + " | ".join(str(c) for c in row) + " |" for row in rows)
    return "\n".join(lines)
