#!/usr/bin/env python3
"""
Chart Graphs and DOT Emission

Turns charts (or a hypothesis and its two source rows) into typed graphs
whose nodes are Processing, Mechanism, Structure and Property entities, and
renders them as Graphviz DOT text.

Mechanisms are nodes, not edge labels, so a generated interdependency can
join two mechanisms directly.
"""

import itertools
import logging
import re
import textwrap
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx

from ..state.hypothesis import Hypothesis
from ..state.system_chart import NA, ChartRow, Mechanism, SystemChart, is_na

logger = logging.getLogger(__name__)

DEFAULT_LIST_DELIMITER = ";"
LABEL_WIDTH = 24

PS = "P->S"
SP = "S->P"


class GraphBuildError(ValueError):
    """A graph cannot be built from its source rows."""


class NodeKind(str, Enum):
    PROCESSING = "Processing"
    MECHANISM = "Mechanism"
    STRUCTURE = "Structure"
    PROPERTY = "Property"


class Origin(str, Enum):
    SET_A = "SetA"
    SET_B = "SetB"
    GENERATED = "Generated"


class EdgeKind(str, Enum):
    FLOW = "Flow"
    INTERDEPENDENCY = "Interdependency"


# Allowed Flow steps along a P-M-S-M-P path.
_FLOW_STEPS = {
    (NodeKind.PROCESSING, NodeKind.MECHANISM),
    (NodeKind.MECHANISM, NodeKind.STRUCTURE),
    (NodeKind.STRUCTURE, NodeKind.MECHANISM),
    (NodeKind.MECHANISM, NodeKind.PROPERTY),
}

SHAPES = {
    NodeKind.PROCESSING: "box",
    NodeKind.MECHANISM: "ellipse",
    NodeKind.STRUCTURE: "hexagon",
    NodeKind.PROPERTY: "diamond",
}

ORIGIN_COLORS = {
    Origin.SET_A: "blue",
    Origin.SET_B: "orange",
    Origin.GENERATED: "green",
}


@dataclass
class NormalizedRow:
    """A chart row after splitting, tagging and N/A filling."""
    processing: str
    mech_ps: Mechanism
    structure: str
    mech_sp: Mechanism
    property: str
    row_index: int
    structure_tag: str = ""
    filled_from: Dict[str, int] = field(default_factory=dict)  # field name -> donor row_index

    @classmethod
    def from_chart_row(cls, row: ChartRow) -> "NormalizedRow":
        return cls(
            processing=row.processing,
            mech_ps=row.mech_ps,
            structure=row.structure,
            mech_sp=row.mech_sp,
            property=row.property,
            row_index=row.row_index,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "row_index": self.row_index,
            "processing": self.processing,
            "mech_ps": self.mech_ps.to_dict(),
            "structure": self.structure,
            "structure_tag": self.structure_tag,
            "mech_sp": self.mech_sp.to_dict(),
            "property": self.property,
            "filled_from": dict(sorted(self.filled_from.items())),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NormalizedRow":
        return cls(
            processing=data["processing"],
            mech_ps=Mechanism.from_dict(data["mech_ps"]),
            structure=data["structure"],
            mech_sp=Mechanism.from_dict(data["mech_sp"]),
            property=data["property"],
            row_index=int(data["row_index"]),
            structure_tag=data.get("structure_tag", ""),
            filled_from={k: int(v) for k, v in data.get("filled_from", {}).items()},
        )


@dataclass
class NormalizedChart:
    paper_id: int
    rows: List[NormalizedRow] = field(default_factory=list)
    tagged: bool = False

    @classmethod
    def from_chart(cls, chart: SystemChart) -> "NormalizedChart":
        return cls(paper_id=chart.paper_id,
                   rows=[NormalizedRow.from_chart_row(r) for r in chart.rows])

    def to_dict(self) -> Dict[str, Any]:
        return {"paper_id": self.paper_id, "tagged": self.tagged,
                "rows": [r.to_dict() for r in self.rows]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NormalizedChart":
        return cls(paper_id=int(data["paper_id"]), tagged=bool(data.get("tagged", False)),
                   rows=[NormalizedRow.from_dict(r) for r in data["rows"]])


RowLike = Union[ChartRow, NormalizedRow]


@dataclass(frozen=True)
class GraphNode:
    node_id: str
    kind: NodeKind
    label: str
    origin: Origin


@dataclass(frozen=True)
class GraphEdge:
    source: str
    target: str
    kind: EdgeKind = EdgeKind.FLOW
    origin: Origin = Origin.SET_A


@dataclass
class ChartGraph:
    """Typed node/edge lists; a networkx mirror backs the structural checks."""
    nodes: Dict[str, GraphNode] = field(default_factory=dict)
    edges: List[GraphEdge] = field(default_factory=list)

    def add_node(self, node: GraphNode) -> str:
        existing = self.nodes.get(node.node_id)
        if existing is not None and existing.kind is not node.kind:
            raise GraphBuildError(
                f"Node {node.node_id} already exists as {existing.kind.value}"
            )
        self.nodes.setdefault(node.node_id, node)
        return node.node_id

    def add_edge(self, edge: GraphEdge):
        source, target = self.nodes[edge.source], self.nodes[edge.target]
        if edge.kind is EdgeKind.FLOW and (source.kind, target.kind) not in _FLOW_STEPS:
            raise GraphBuildError(
                f"Flow edge {source.kind.value} -> {target.kind.value} is not a P-M-S-M-P step"
            )
        if edge.kind is EdgeKind.INTERDEPENDENCY and not (
            source.kind is NodeKind.MECHANISM and target.kind is NodeKind.MECHANISM
        ):
            raise GraphBuildError("Interdependency edges must join two mechanism nodes")
        self.edges.append(edge)

    def flow_edges(self) -> List[GraphEdge]:
        return [e for e in self.edges if e.kind is EdgeKind.FLOW]

    def interdependency_edges(self) -> List[GraphEdge]:
        return [e for e in self.edges if e.kind is EdgeKind.INTERDEPENDENCY]

    def to_networkx(self) -> nx.MultiDiGraph:
        graph = nx.MultiDiGraph()
        for node in self.nodes.values():
            graph.add_node(node.node_id, kind=node.kind.value, label=node.label,
                           origin=node.origin.value)
        for edge in self.edges:
            graph.add_edge(edge.source, edge.target, kind=edge.kind.value,
                           origin=edge.origin.value)
        return graph

    def validate(self):
        """
        Check the Flow subgraph is acyclic and every node has exactly one kind.

        Raises:
            GraphBuildError: Either check fails
        """
        graph = self.to_networkx()
        flow = nx.DiGraph()
        flow.add_nodes_from(graph.nodes)
        flow.add_edges_from((u, v) for u, v, kind in graph.edges(data="kind")
                            if kind == EdgeKind.FLOW.value)
        if not nx.is_directed_acyclic_graph(flow):
            raise GraphBuildError(f"Flow edges contain a cycle: {nx.find_cycle(flow)}")

        by_kind = {kind: {n for n, k in graph.nodes(data="kind") if k == kind.value}
                   for kind in NodeKind}
        if sum(len(ids) for ids in by_kind.values()) != graph.number_of_nodes():
            raise GraphBuildError("Node kinds do not partition the node set")


def _split_cell(value: str, delimiter: str) -> List[str]:
    if delimiter not in value:
        return [value]
    parts = [part.strip() for part in value.split(delimiter) if part.strip()]
    return parts or [NA]


def split_combined_rows(chart: SystemChart, delimiter: str = DEFAULT_LIST_DELIMITER) -> SystemChart:
    """
    Separate rows whose processing or property cell lists several values.

    Each combination of processing and property values becomes its own row
    with the mechanisms copied; rows are renumbered 1..n in order. A chart
    without delimiters comes back unchanged.
    """
    if not any(delimiter in row.processing or delimiter in row.property for row in chart.rows):
        return SystemChart(paper_id=chart.paper_id, rows=list(chart.rows),
                           chart_token_estimate=chart.chart_token_estimate)

    rows: List[ChartRow] = []
    for row in chart.rows:
        for processing, prop in itertools.product(_split_cell(row.processing, delimiter),
                                                  _split_cell(row.property, delimiter)):
            rows.append(replace(row, processing=processing, property=prop,
                                row_index=len(rows) + 1))

    logger.debug(f"Paper {chart.paper_id}: split {len(chart.rows)} rows into {len(rows)}")
    return SystemChart(paper_id=chart.paper_id, rows=rows,
                       chart_token_estimate=chart.chart_token_estimate)


def _structure_label(row: RowLike) -> str:
    tag = getattr(row, "structure_tag", "")
    return f"{row.structure} [{tag}]" if tag else row.structure


def _shared_id(prefix: str, field: str, value: str, label: str, row_index: int) -> str:
    """Nodes merge on identical labels, except N/A placeholders, which stay per row."""
    if is_na(value):
        return f"{prefix}r{row_index}:{field}"
    return f"{prefix}{field}:{label}"


def _add_row_path(graph: ChartGraph, row: RowLike, prefix: str, origin: Origin) -> Tuple[str, str]:
    """Add one row's P-M-S-M-P path; returns the ids of its (P->S, S->P) mechanism nodes."""
    r = row.row_index
    processing = graph.add_node(GraphNode(f"{prefix}r{r}:processing", NodeKind.PROCESSING,
                                          row.processing, origin))
    mech_ps = graph.add_node(GraphNode(f"{prefix}r{r}:mech_ps", NodeKind.MECHANISM,
                                       row.mech_ps.render(), origin))
    structure_label = _structure_label(row)
    structure = graph.add_node(GraphNode(
        _shared_id(prefix, "structure", row.structure, structure_label, r),
        NodeKind.STRUCTURE, structure_label, origin))
    mech_sp = graph.add_node(GraphNode(f"{prefix}r{r}:mech_sp", NodeKind.MECHANISM,
                                       row.mech_sp.render(), origin))
    prop = graph.add_node(GraphNode(_shared_id(prefix, "property", row.property, row.property, r),
                                    NodeKind.PROPERTY, row.property, origin))

    for source, target in ((processing, mech_ps), (mech_ps, structure),
                           (structure, mech_sp), (mech_sp, prop)):
        graph.add_edge(GraphEdge(source, target, EdgeKind.FLOW, origin))
    return mech_ps, mech_sp


def build_chart_graph(chart: Union[NormalizedChart, SystemChart],
                      origin: Origin = Origin.SET_A) -> ChartGraph:
    """One Flow path per row; Structure and Property nodes merge on identical non-N/A labels."""
    graph = ChartGraph()
    for row in chart.rows:
        _add_row_path(graph, row, prefix="", origin=origin)
    graph.validate()
    return graph


def _words(text: str) -> set:
    return set(re.findall(r"[a-z0-9]+", text.lower()))


def infer_linked_mechanism(hypothesis_text: str, row: RowLike) -> str:
    """The row mechanism sharing most words with the hypothesis; ties go to S->P."""
    words = _words(hypothesis_text)
    ps_overlap = len(words & _words(row.mech_ps.text))
    sp_overlap = len(words & _words(row.mech_sp.text))
    return PS if ps_overlap > sp_overlap else SP


def build_hypothesis_graph(hypothesis: Hypothesis, row_a: RowLike, row_b: RowLike,
                           paper_a: int, paper_b: int) -> ChartGraph:
    """
    Both source rows as colored paths plus the generated Interdependency edge.

    Args:
        hypothesis: Generated hypothesis
        row_a: Set A source row
        row_b: Set B source row
        paper_a: Paper the Set A row belongs to
        paper_b: Paper the Set B row belongs to

    Returns:
        Validated ChartGraph

    Raises:
        GraphBuildError: The rows are not the hypothesis's source rows, or the
            hypothesis names a mechanism its rows do not have
    """
    pair = hypothesis.pair
    mismatches = []
    if (paper_a, row_a.row_index) != (pair.a.paper_id, pair.a.row_index):
        mismatches.append(f"set A row {paper_a}:{row_a.row_index} is not "
                          f"{pair.a.paper_id}:{pair.a.row_index}")
    if (paper_b, row_b.row_index) != (pair.b.paper_id, pair.b.row_index):
        mismatches.append(f"set B row {paper_b}:{row_b.row_index} is not "
                          f"{pair.b.paper_id}:{pair.b.row_index}")

    if hypothesis.linked_mechanisms is not None:
        linked = tuple(hypothesis.linked_mechanisms)
        for side, value in zip("AB", linked):
            if value not in (PS, SP):
                mismatches.append(f"row {side} has no mechanism '{value}'")
    else:
        linked = (infer_linked_mechanism(hypothesis.text, row_a),
                  infer_linked_mechanism(hypothesis.text, row_b))
        logger.debug(f"Hypothesis {hypothesis.hypothesis_id}: inferred link {linked}")

    for side, row, which in zip("AB", (row_a, row_b), linked):
        if which in (PS, SP):
            mechanism = row.mech_ps if which == PS else row.mech_sp
            if not mechanism.text.strip():
                mismatches.append(f"row {side} mechanism {which} is empty")

    if mismatches:
        logger.error(f"Hypothesis {hypothesis.hypothesis_id}: {'; '.join(mismatches)}")
        raise GraphBuildError(
            f"Hypothesis {hypothesis.hypothesis_id} does not match its source rows: "
            + "; ".join(mismatches)
        )

    graph = ChartGraph()
    a_ps, a_sp = _add_row_path(graph, row_a, prefix="A:", origin=Origin.SET_A)
    b_ps, b_sp = _add_row_path(graph, row_b, prefix="B:", origin=Origin.SET_B)
    source = a_ps if linked[0] == PS else a_sp
    target = b_ps if linked[1] == PS else b_sp
    graph.add_edge(GraphEdge(source, target, EdgeKind.INTERDEPENDENCY, Origin.GENERATED))
    graph.validate()
    return graph


def build_graph(source: Union[NormalizedChart, SystemChart, Hypothesis],
                source_rows: Optional[Sequence[RowLike]] = None) -> ChartGraph:
    """
    Build a chart-mode or hypothesis-mode graph.

    A chart gives chart mode. A hypothesis needs `source_rows` = (row_a, row_b)
    and gives hypothesis mode; the rows are taken to belong to the papers the
    hypothesis pair names.
    """
    if isinstance(source, Hypothesis):
        if source_rows is None or len(source_rows) != 2:
            raise GraphBuildError("Hypothesis mode needs exactly two source rows")
        row_a, row_b = source_rows
        return build_hypothesis_graph(source, row_a, row_b,
                                      source.pair.a.paper_id, source.pair.b.paper_id)
    return build_chart_graph(source)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _wrap(label: str) -> str:
    lines = textwrap.wrap(label, width=LABEL_WIDTH) or [label]
    return "\\n".join(line.replace("\\", "\\\\").replace('"', '\\"') for line in lines)


def emit_dot(graph: ChartGraph) -> str:
    """
    Render a graph as DOT text.

    Nodes are sorted by id and edges by (source, target, kind), so identical
    graphs always produce identical text.
    """
    if not graph.nodes:
        return "digraph chart { }"

    colored = any(n.origin is not Origin.SET_A for n in graph.nodes.values())
    lines = ["digraph chart {", "  rankdir=LR;"]
    for node_id in sorted(graph.nodes):
        node = graph.nodes[node_id]
        attrs = [f"shape={SHAPES[node.kind]}", f'label="{_wrap(node.label)}"']
        if colored:
            attrs.append(f"color={ORIGIN_COLORS[node.origin]}")
        lines.append(f"  {_quote(node_id)} [{', '.join(attrs)}];")

    for edge in sorted(graph.edges, key=lambda e: (e.source, e.target, e.kind.value)):
        statement = f"  {_quote(edge.source)} -> {_quote(edge.target)}"
        if edge.kind is EdgeKind.INTERDEPENDENCY:
            statement += " [style=dashed, color=green]"
        lines.append(statement + ";")

    lines.append("}")
    return "\n".join(lines) + "\n"
