#!/usr/bin/env python3
"""
Idea Categorizer - two-step hypothesis categorization

Collapses the Strong∧Synergistic hypothesis pool into ideas:

1. The pool is cut into k contiguous, near-equal chunks and each chunk is
   categorized on its own (chunks run concurrently).
2. The chunk ideas are merged in one sequential conversation. Long answers
   are continued turn by turn; the idea count is checked right after every
   reply and the conversation halts as soon as it exceeds the cap.

The merge conversation runs as a LangGraph StateGraph:
START -> request -> absorb -> (request | END).
"""

import asyncio
import logging
import re
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple, TypedDict

from langgraph.graph import END, START, StateGraph

from llm_gateway.api.llm_client import BackendHandle, LlmGatewayError, LlmRequest
from llm_gateway.config import StageProfile
from materials_chart.state.hypothesis import (
    CategorizationState,
    EvaluationRecord,
    GroundingEvaluation,
    GroundingLabel,
    Hypothesis,
    Idea,
    SynergyEvaluation,
    SynergyLabel,
)
from materials_chart.utils.table_parser import TableParseError, TableRow, parse_chart_table

DEFAULT_CHUNKS = 5
DEFAULT_IDEA_CAP = 50
DEFAULT_TURN_BUDGET = 10
END_MARKER = "END OF IDEAS"

CHUNK_PROMPT = """Categorize the materials design hypotheses below into ideas. Hypotheses
belong to the same idea when they combine similar source papers, share core
structural entities and rest on the same synergistic mechanism.

Reply with a table with exactly four columns:

| Idea | Hypotheses | Structural entities | Core concepts |

List hypothesis numbers separated by commas and structural entities
separated by semicolons. Put every hypothesis in exactly one idea.
Reply with the table only.

HYPOTHESES
{hypotheses}"""

MERGE_PROMPT = """Below are ideas found separately in {chunks} groups of hypotheses. Merge
ideas that combine similar source-paper pairs, share structural entities and
express the same core concept; keep distinct ideas separate.

Reply with a table with exactly four columns:

| Idea | Merged ideas | Structural entities | Core concepts |

In "Merged ideas" list the keys (such as C1-2) of the ideas each row merges,
separated by commas; use every key exactly once. Give at most {rows_per_turn}
rows per reply; you will be asked to continue. Write "{end_marker}" on its own
line after the last row.

IDEAS
{ideas}"""

CONTINUE_PROMPT = """Continue the table from idea {next_idea}, in the same format, without
repeating earlier rows. Write "{end_marker}" on its own line after the last row."""

REPAIR_PROMPT = """Your table could not be parsed: {error}
Reply again with only the table, exactly 4 columns per row, every cell separated by "|"."""

ROWS_PER_TURN = 20

_IDEA_KEY = re.compile(r"C\s*(\d+)\s*-\s*(\d+)", re.IGNORECASE)
_NUMBER = re.compile(r"\d+")


def _split_list(cell: str) -> List[str]:
    return [item.strip() for item in re.split(r"[;,]", cell) if item.strip()]


def filter_pool(hypotheses: Sequence[Hypothesis],
                synergy_evals: Dict[int, SynergyEvaluation],
                grounding_evals: Dict[int, GroundingEvaluation]) -> List[Hypothesis]:
    """
    Hypotheses evaluated both Strong and Synergistic, ordered by id.

    Hypotheses missing either evaluation are excluded and counted.
    """
    logger = logging.getLogger(__name__)
    if not synergy_evals or not grounding_evals:
        logger.warning("No evaluations available; the pool is empty")
        return []

    pool = []
    unevaluated = 0
    for hypothesis in sorted(hypotheses, key=lambda h: h.hypothesis_id):
        synergy = synergy_evals.get(hypothesis.hypothesis_id)
        grounding = grounding_evals.get(hypothesis.hypothesis_id)
        if synergy is None or grounding is None:
            unevaluated += 1
            continue
        if synergy.label is SynergyLabel.SYNERGISTIC and grounding.label is GroundingLabel.STRONG:
            pool.append(hypothesis)

    if unevaluated:
        logger.warning(f"{unevaluated} unevaluated hypotheses excluded from the pool")
    logger.info(f"Strong and Synergistic pool: {len(pool)} of {len(hypotheses)} hypotheses")
    return pool


def pool_from_records(hypotheses: Sequence[Hypothesis],
                      records: Sequence[EvaluationRecord]) -> List[Hypothesis]:
    synergy = {r.hypothesis_id: r.synergy for r in records if r.synergy is not None}
    grounding = {r.hypothesis_id: r.grounding for r in records if r.grounding is not None}
    return filter_pool(hypotheses, synergy, grounding)


def chunk_pool(pool: Sequence[Any], k: int = DEFAULT_CHUNKS) -> List[List[Any]]:
    """
    Contiguous, order-preserving partition into k near-equal chunks.

    Sizes differ by at most one, larger chunks first. With fewer items than
    chunks every item gets its own chunk.

    Raises:
        ValueError: Empty pool or k < 1
    """
    if k < 1:
        raise ValueError(f"Chunk count must be at least 1: {k}")
    if not pool:
        raise ValueError("Cannot chunk an empty pool")
    if k > len(pool):
        logging.getLogger(__name__).warning(
            f"{k} chunks requested for {len(pool)} hypotheses; using singleton chunks")
        k = len(pool)

    size, extra = divmod(len(pool), k)
    chunks = []
    start = 0
    for i in range(k):
        end = start + size + (1 if i < extra else 0)
        chunks.append(list(pool[start:end]))
        start = end
    return chunks


def _pair_signature(hypotheses: Sequence[Hypothesis]) -> Set[Tuple[int, int]]:
    return {(h.pair.a.paper_id, h.pair.b.paper_id) for h in hypotheses}


class MergeState(TypedDict):
    """LangGraph state of the merge conversation."""
    request: LlmRequest
    reply: str
    truncated: bool
    ideas: List[Idea]
    assigned: Set[int]
    turns: int
    finished: bool
    halted: bool
    exhausted: bool


class IdeaCategorizer:
    """
    Categorization stage.

    Chunk ideas are keyed "C<chunk>-<idea>" and carried into the merge prompt
    with their memberships verbatim; the merge reply refers to those keys.
    """

    def __init__(self, backend: BackendHandle, profile: StageProfile,
                 chunks: int = DEFAULT_CHUNKS, idea_cap: int = DEFAULT_IDEA_CAP,
                 turn_budget: int = DEFAULT_TURN_BUDGET):
        """
        Initialize the categorizer.

        Args:
            backend: Gateway-bound backend handle
            profile: Categorization stage profile
            chunks: Number of first-step chunks (k)
            idea_cap: Merge halts once the idea count exceeds this
            turn_budget: Maximum merge replies
        """
        if min(chunks, idea_cap, turn_budget) < 1:
            raise ValueError("chunks, idea_cap and turn_budget must be positive")
        self.backend = backend
        self.profile = profile
        self.chunks = chunks
        self.idea_cap = idea_cap
        self.turn_budget = turn_budget
        self.logger = logging.getLogger(__name__)

        self.failed_chunks: List[int] = []
        self._chunk_ideas: Dict[str, Idea] = {}
        self._hypotheses: Dict[int, Hypothesis] = {}
        self.graph = self._build_graph()

    # Step 1

    def _describe(self, hypothesis: Hypothesis, synergy: Optional[SynergyEvaluation]) -> str:
        pair = hypothesis.pair
        structures = "; ".join(synergy.core_structures if synergy and synergy.core_structures
                               else hypothesis.combined_structures) or "n/a"
        sentences = " ".join(f'"{s}"' for s in (synergy.interdependence_sentences if synergy else []))
        return (f"Hypothesis {hypothesis.hypothesis_id} | papers [{pair.a.paper_id}] and "
                f"[{pair.b.paper_id}] | core structural entities: {structures} | "
                f"synergistic mechanism: {sentences or hypothesis.text}")

    def _chunk_ideas_from(self, rows: List[TableRow], members: Dict[int, Hypothesis],
                          chunk_number: int) -> List[Idea]:
        ideas: List[Idea] = []
        assigned: Set[int] = set()
        for row in rows:
            _, hypotheses_cell, entities, concept = row.cells
            ids = []
            for number in (int(n) for n in _NUMBER.findall(hypotheses_cell)):
                if number not in members:
                    self.logger.warning(f"Chunk {chunk_number}: hypothesis {number} is not in "
                                        f"the chunk, ignoring it")
                elif number in assigned:
                    self.logger.warning(f"Chunk {chunk_number}: hypothesis {number} assigned "
                                        f"twice, keeping the first idea")
                else:
                    ids.append(number)
                    assigned.add(number)
            if not ids:
                continue
            ideas.append(Idea(
                idea_id=len(ideas) + 1,
                member_hypotheses=ids,
                structural_entities=_split_list(entities),
                core_concept=concept,
                source_pair_signature=_pair_signature([members[i] for i in ids]),
            ))
        return ideas

    async def categorize_chunk(self, chunk: Sequence[Tuple[Hypothesis, Optional[SynergyEvaluation]]],
                               chunk_number: int = 1) -> List[Idea]:
        """
        First-step ideas of one chunk, numbered from 1.

        An unparseable reply after one reprompt yields no ideas; the chunk's
        hypotheses then end up dropped.
        """
        if not chunk:
            raise ValueError("Cannot categorize an empty chunk")
        members = {h.hypothesis_id: h for h, _ in chunk}
        request = self.profile.request(CHUNK_PROMPT.format(
            hypotheses="\n".join(self._describe(h, s) for h, s in chunk)))

        try:
            response = await self.backend.complete(request)
            try:
                rows = parse_chart_table(response.text, 4, truncated=response.truncated)
            except TableParseError as e:
                self.logger.warning(f"Chunk {chunk_number}: unparseable table ({e}), reprompting once")
                repair = request.followup(response.text, REPAIR_PROMPT.format(error=e))
                response = await self.backend.complete(repair)
                rows = parse_chart_table(response.text, 4, truncated=response.truncated)
        except (TableParseError, LlmGatewayError) as e:
            self.logger.error(f"Chunk {chunk_number}: categorization failed, dropping "
                              f"{len(chunk)} hypotheses: {e}")
            self.failed_chunks.append(chunk_number)
            return []

        ideas = self._chunk_ideas_from(rows, members, chunk_number)
        self.logger.info(f"Chunk {chunk_number}: {len(chunk)} hypotheses -> {len(ideas)} ideas")
        return ideas

    # Step 2

    def _build_graph(self):
        workflow = StateGraph(MergeState)
        workflow.add_node("request", self._request_node)
        workflow.add_node("absorb", self._absorb_node)
        workflow.add_edge(START, "request")
        workflow.add_edge("request", "absorb")
        workflow.add_conditional_edges("absorb", self._next_step, {"continue": "request", "stop": END})
        return workflow.compile()

    async def _request_node(self, state: MergeState) -> Dict[str, Any]:
        response = await self.backend.complete(state["request"])
        return {"reply": response.text, "truncated": response.truncated,
                "turns": state["turns"] + 1}

    def _merged_idea(self, row: TableRow, assigned: Set[int], idea_id: int) -> Optional[Idea]:
        _, keys_cell, entities, concept = row.cells
        members: List[int] = []
        for chunk_number, idea_number in _IDEA_KEY.findall(keys_cell):
            key = f"C{int(chunk_number)}-{int(idea_number)}"
            source = self._chunk_ideas.get(key)
            if source is None:
                self.logger.warning(f"Merge reply names unknown idea {key}")
                continue
            for hypothesis_id in source.member_hypotheses:
                if hypothesis_id in assigned or hypothesis_id in members:
                    self.logger.warning(f"Hypothesis {hypothesis_id} already merged elsewhere; "
                                        f"keeping its first idea")
                else:
                    members.append(hypothesis_id)
        if not members:
            return None
        return Idea(
            idea_id=idea_id,
            member_hypotheses=members,
            structural_entities=_split_list(entities),
            core_concept=concept,
            source_pair_signature=_pair_signature([self._hypotheses[i] for i in members]),
        )

    async def _absorb_node(self, state: MergeState) -> Dict[str, Any]:
        reply = state["reply"]
        finished = END_MARKER.lower() in reply.lower()
        ideas = list(state["ideas"])
        assigned = set(state["assigned"])

        table_text = reply[:reply.lower().find(END_MARKER.lower())] if finished else reply
        next_prompt = None
        try:
            cut_off = state["truncated"] and not finished
            for row in parse_chart_table(table_text, 4, truncated=cut_off):
                idea = self._merged_idea(row, assigned, len(ideas) + 1)
                if idea is not None:
                    ideas.append(idea)
                    assigned.update(idea.member_hypotheses)
        except TableParseError as e:
            if not finished:
                self.logger.warning(f"Merge turn {state['turns']}: {e}")
                next_prompt = REPAIR_PROMPT.format(error=e)

        update: Dict[str, Any] = {"ideas": ideas, "assigned": assigned, "finished": finished}

        if len(ideas) > self.idea_cap:
            self.logger.warning(f"Idea count {len(ideas)} exceeds the cap of {self.idea_cap}; "
                                f"halting the merge")
            update["halted"] = True
            return update
        if finished:
            return update
        if state["turns"] >= self.turn_budget:
            self.logger.warning(f"Merge turn budget of {self.turn_budget} exhausted")
            update["exhausted"] = True
            return update

        next_prompt = next_prompt or CONTINUE_PROMPT.format(next_idea=len(ideas) + 1,
                                                            end_marker=END_MARKER)
        update["request"] = state["request"].followup(reply, next_prompt)
        return update

    @staticmethod
    def _next_step(state: MergeState) -> str:
        if state["halted"] or state["finished"] or state["exhausted"]:
            return "stop"
        return "continue"

    def _merge_listing(self) -> str:
        lines = []
        for key, idea in self._chunk_ideas.items():
            pairs = "; ".join(f"({a}, {b})" for a, b in sorted(idea.source_pair_signature))
            lines.append(
                f"{key} | hypotheses {', '.join(map(str, idea.member_hypotheses))} | "
                f"paper pairs {pairs} | entities: {'; '.join(idea.structural_entities)} | "
                f"concept: {idea.core_concept}"
            )
        return "\n".join(lines)

    async def merge_ideas(self, per_chunk_ideas: Sequence[Sequence[Idea]],
                          pool: Sequence[Hypothesis]) -> CategorizationState:
        """
        Second step: merge chunk ideas into the final, densely numbered ideas.

        Args:
            per_chunk_ideas: First-step ideas, one list per chunk in chunk order
            pool: The categorized hypotheses

        Returns:
            CategorizationState with halted / turn_budget_exhausted flags and
            the pool hypotheses no final idea covers

        Raises:
            ValueError: Every chunk idea list is empty
        """
        if not any(per_chunk_ideas):
            raise ValueError("Merge needs at least one chunk idea")

        self._hypotheses = {h.hypothesis_id: h for h in pool}
        self._chunk_ideas = {
            f"C{chunk}-{idea.idea_id}": idea
            for chunk, ideas in enumerate(per_chunk_ideas, start=1) for idea in ideas
        }

        initial: MergeState = {
            "request": self.profile.request(MERGE_PROMPT.format(
                chunks=len(per_chunk_ideas), rows_per_turn=ROWS_PER_TURN,
                end_marker=END_MARKER, ideas=self._merge_listing())),
            "reply": "",
            "truncated": False,
            "ideas": [],
            "assigned": set(),
            "turns": 0,
            "finished": False,
            "halted": False,
            "exhausted": False,
        }
        try:
            final = await self.graph.ainvoke(initial,
                                             config={"recursion_limit": 2 * self.turn_budget + 5})
        except LlmGatewayError as e:
            self.logger.error(f"Merge conversation failed: {e}")
            raise

        ideas = [Idea(idea_id=i, member_hypotheses=idea.member_hypotheses,
                      structural_entities=idea.structural_entities,
                      core_concept=idea.core_concept,
                      source_pair_signature=idea.source_pair_signature)
                 for i, idea in enumerate(final["ideas"], start=1)]
        covered = {h for idea in ideas for h in idea.member_hypotheses}
        dropped = sorted(h.hypothesis_id for h in pool if h.hypothesis_id not in covered)

        self.logger.info(f"Merged {len(self._chunk_ideas)} chunk ideas into {len(ideas)} ideas "
                         f"in {final['turns']} turns; {len(dropped)} hypotheses dropped")
        return CategorizationState(ideas=ideas, halted=final["halted"], dropped_hypotheses=dropped,
                                   turn_budget_exhausted=final["exhausted"])

    async def categorize(self, pool: Sequence[Hypothesis],
                         synergy_evals: Dict[int, SynergyEvaluation]
                         ) -> Tuple[CategorizationState, List[List[Idea]]]:
        """Both steps over a non-empty pool; returns the final state and the chunk ideas."""
        chunks = chunk_pool(list(pool), self.chunks)
        per_chunk = await asyncio.gather(*(
            self.categorize_chunk([(h, synergy_evals.get(h.hypothesis_id)) for h in chunk], i)
            for i, chunk in enumerate(chunks, start=1)
        ))
        if not any(per_chunk):
            self.logger.error("No chunk produced ideas; every pool hypothesis is dropped")
            return CategorizationState(
                dropped_hypotheses=sorted(h.hypothesis_id for h in pool)), list(per_chunk)
        state = await self.merge_ideas(per_chunk, pool)
        return state, list(per_chunk)


def coverage_report(state: CategorizationState, pool: Sequence[Hypothesis]) -> Dict[str, Any]:
    """Covered and dropped counts, loss fraction and idea sizes."""
    pool_ids = {h.hypothesis_id for h in pool}
    covered = state.covered_hypotheses & pool_ids
    dropped = pool_ids - covered
    return {
        "pool_size": len(pool_ids),
        "covered": len(covered),
        "dropped": len(dropped),
        "dropped_hypotheses": sorted(dropped),
        "loss_fraction": len(dropped) / len(pool_ids) if pool_ids else 0.0,
        "idea_count": len(state.ideas),
        "idea_sizes": {str(idea.idea_id): len(idea.member_hypotheses) for idea in state.ideas},
        "halted": state.halted,
        "turn_budget_exhausted": state.turn_budget_exhausted,
    }
