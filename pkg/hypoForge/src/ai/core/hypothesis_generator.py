#!/usr/bin/env python3
"""
Hypothesis Generator - cross-set synergistic hypothesis generation

Pairs every chart row of paper set A with every chart row of set B and asks
the backend, at temperature 1.0, for hypotheses in which a mechanism of one
row positively influences a mechanism of the other. Each pair is sampled
n times; a draft-number salt keeps the samples distinct cacheable requests.
"""

import asyncio
import logging
import random
import re
from dataclasses import replace
from typing import Iterable, List, Optional, Sequence, Set, Tuple

from llm_gateway.api.llm_client import BackendHandle, LlmGatewayError
from llm_gateway.config import DomainProfile, StageProfile
from materials_chart.state.hypothesis import Hypothesis, RowPair, RowRef
from materials_chart.state.system_chart import ChartRow, SystemChart, find_row

GENERATION_PROMPT = """Below are two rows of materials system charts taken from papers in
different paper sets. Each row reads
Processing | Mechanism (P→S) | Structure | Mechanism (S→P) | Property.

Row A (paper [{paper_a}]): | {row_a} |
Row B (paper [{paper_b}]): | {row_b} |
{design_goal}
Suggest one hypothesis that synergistically combines the two rows. At least one
mechanism of one row must positively influence a mechanism of the other,
creating an interdependence between them; do not merely add two independent
effects together.{compound_clause}
Cite the papers with their bracketed numbers, e.g. [{paper_a}], where their
findings are used.

After the hypothesis add two lines:
Structural entities: <the structures your hypothesis combines, separated by semicolons>
Interdependency: A(<P->S or S->P>) -> B(<P->S or S->P>)

This is draft {sample} of {n_samples}."""

COMPOUND_CLAUSE = (
    "\nThe proposed material must be a single \"compound\" rather than a "
    "\"composite\" of separate phases."
)

_CITATION = re.compile(r"\[(\d+)\]")
_STRUCTURES_LINE = re.compile(r"^\W*structural entities\W*:\s*(.*)$", re.IGNORECASE)
_INTERDEPENDENCY_LINE = re.compile(r"^\W*interdependency\W*:\s*(.*)$", re.IGNORECASE)
_LINK = re.compile(
    r"A\s*\(\s*(P\s*->\s*S|S\s*->\s*P)\s*\)\s*->\s*B\s*\(\s*(P\s*->\s*S|S\s*->\s*P)\s*\)",
    re.IGNORECASE,
)
_LABEL_PREFIX = re.compile(r"^\W*hypothesis(\s*\d+)?\s*:\s*", re.IGNORECASE)


class HypothesisParseError(ValueError):
    """A generation reply holds no hypothesis text."""


def _sorted_rows(charts: Sequence[SystemChart]) -> List[Tuple[int, ChartRow]]:
    return sorted(((c.paper_id, r) for c in charts for r in c.rows),
                  key=lambda item: (item[0], item[1].row_index))


def enumerate_pairs(charts_a: Sequence[SystemChart], charts_b: Sequence[SystemChart],
                    cap: Optional[int] = None, seed: int = 0) -> List[RowPair]:
    """
    Cross product of set A rows and set B rows.

    Args:
        charts_a: Set A charts
        charts_b: Set B charts
        cap: Optional sample size; the sample keeps lexicographic order
        seed: Sampling seed

    Returns:
        RowPairs in (paper_id, row_index) lexicographic order; pair_id is the
        1-based position in the full cross product

    Raises:
        ValueError: Either side has no rows, or cap < 1
    """
    rows_a = _sorted_rows(charts_a)
    rows_b = _sorted_rows(charts_b)
    if not rows_a or not rows_b:
        raise ValueError("Both paper sets need at least one chart row")
    if set(c.paper_id for c in charts_a) & set(c.paper_id for c in charts_b):
        raise ValueError("A paper cannot belong to both sets")

    pairs = [
        RowPair(pair_id=i, a=RowRef(pa, ra.row_index), b=RowRef(pb, rb.row_index))
        for i, ((pa, ra), (pb, rb)) in enumerate(
            ((a, b) for a in rows_a for b in rows_b), start=1)
    ]

    if cap is None:
        return pairs
    if cap < 1:
        raise ValueError(f"Pair cap must be positive: {cap}")
    if cap >= len(pairs):
        if cap > len(pairs):
            logging.getLogger(__name__).warning(
                f"Pair cap {cap} exceeds the {len(pairs)} available pairs; using all of them")
        return pairs

    chosen = sorted(random.Random(seed).sample(range(len(pairs)), cap))
    return [pairs[i] for i in chosen]


def parse_hypothesis(raw: str, pair: RowPair, sample_index: int = 0) -> Hypothesis:
    """
    Parse one generation reply.

    The free text keeps its bracketed citation markers; the optional
    "Structural entities:" and "Interdependency:" lines are lifted out of it.

    Raises:
        HypothesisParseError: No hypothesis text remains
    """
    logger = logging.getLogger(__name__)
    structures: List[str] = []
    linked: Optional[Tuple[str, str]] = None
    text_lines: List[str] = []

    for line in raw.replace("→", "->").splitlines():
        structures_match = _STRUCTURES_LINE.match(line)
        if structures_match:
            structures = [s.strip(" *") for s in structures_match.group(1).split(";") if s.strip(" *")]
            continue
        link_match = _INTERDEPENDENCY_LINE.match(line)
        if link_match:
            found = _LINK.search(link_match.group(1))
            if found:
                linked = tuple(re.sub(r"\s+", "", g).upper() for g in found.groups())
            else:
                logger.warning(f"Pair {pair.pair_id}: unreadable interdependency line {line!r}")
            continue
        text_lines.append(line)

    text = _LABEL_PREFIX.sub("", "\n".join(text_lines).strip(), count=1).strip()
    if not text:
        raise HypothesisParseError(f"Pair {pair.pair_id}: reply holds no hypothesis text")

    cited = sorted({int(n) for n in _CITATION.findall(text)})
    if not cited:
        logger.warning(f"Pair {pair.pair_id}: hypothesis cites no papers")

    return Hypothesis(pair=pair, text=text, cited_papers=cited, combined_structures=structures,
                      linked_mechanisms=linked, sample_index=sample_index)


def assign_ids(batches: Iterable[Sequence[Hypothesis]]) -> List[Hypothesis]:
    """Flatten batches and number hypotheses 1..N in (pair, sample) order."""
    flat = [h for batch in batches for h in batch]
    return [replace(h, hypothesis_id=i) for i, h in enumerate(flat, start=1)]


class HypothesisGenerator:
    """
    Generation stage for a set of row pairs.

    Pairs run concurrently; a pair whose samples all fail is skipped, a pair
    with some failed samples keeps the rest.
    """

    def __init__(self, backend: BackendHandle, profile: StageProfile,
                 domain: Optional[DomainProfile] = None, n_samples: int = 3,
                 known_paper_ids: Optional[Set[int]] = None):
        """
        Initialize the generator.

        Args:
            backend: Gateway-bound backend handle
            profile: Generation stage profile (temperature 1.0 by default)
            domain: Domain profile; compound_mode adds the compound clause
            n_samples: Completions per pair
            known_paper_ids: Corpus ids; citations outside it are dropped
        """
        if n_samples < 1:
            raise ValueError(f"n_samples must be at least 1: {n_samples}")
        self.backend = backend
        self.profile = profile
        self.domain = domain
        self.n_samples = n_samples
        self.known_paper_ids = known_paper_ids
        self.logger = logging.getLogger(__name__)

        if profile.temperature != 1.0:
            self.logger.warning(f"Generation temperature is {profile.temperature}, not 1.0")

        self.skipped_pairs: List[int] = []
        self.failed_samples = 0

    def build_prompt(self, pair: RowPair, row_a: ChartRow, row_b: ChartRow, sample: int) -> str:
        goal = f"\nDesign goal: {self.domain.design_goal}\n" if self.domain and self.domain.design_goal else ""
        compound = COMPOUND_CLAUSE if self.domain and self.domain.compound_mode else ""
        return GENERATION_PROMPT.format(
            paper_a=pair.a.paper_id, paper_b=pair.b.paper_id,
            row_a=" | ".join(row_a.cells()), row_b=" | ".join(row_b.cells()),
            design_goal=goal, compound_clause=compound,
            sample=sample, n_samples=self.n_samples,
        )

    def _drop_unknown_citations(self, hypothesis: Hypothesis) -> Hypothesis:
        if self.known_paper_ids is None:
            return hypothesis
        unknown = [p for p in hypothesis.cited_papers if p not in self.known_paper_ids]
        if not unknown:
            return hypothesis
        self.logger.warning(f"Pair {hypothesis.pair.pair_id}: dropping citations of unknown "
                            f"papers {unknown}")
        return replace(hypothesis, cited_papers=[p for p in hypothesis.cited_papers
                                                 if p in self.known_paper_ids])

    async def _sample(self, pair: RowPair, row_a: ChartRow, row_b: ChartRow,
                      sample: int) -> Optional[Hypothesis]:
        request = self.profile.request(self.build_prompt(pair, row_a, row_b, sample))
        try:
            response = await self.backend.complete(request)
            hypothesis = parse_hypothesis(response.text, pair, sample_index=sample)
        except (LlmGatewayError, HypothesisParseError) as e:
            self.logger.warning(f"Pair {pair.pair_id} sample {sample}: {e}")
            self.failed_samples += 1
            return None
        return self._drop_unknown_citations(hypothesis)

    async def generate_for_pair(self, pair: RowPair, row_a: ChartRow,
                                row_b: ChartRow) -> List[Hypothesis]:
        """n_samples hypotheses for one pair, unnumbered, in sample order."""
        samples = await asyncio.gather(*(
            self._sample(pair, row_a, row_b, s) for s in range(1, self.n_samples + 1)
        ))
        parsed = [h for h in samples if h is not None]
        if not parsed:
            self.logger.warning(f"Pair {pair.pair_id}: every sample failed, skipping the pair")
            self.skipped_pairs.append(pair.pair_id)
        return parsed

    async def generate(self, pairs: Sequence[RowPair],
                       charts: Sequence[SystemChart]) -> List[Hypothesis]:
        """
        Generate for every pair and number the result.

        Raises:
            ValueError: A pair references a row missing from the charts
        """
        resolved = []
        for pair in pairs:
            row_a = find_row(charts, pair.a.paper_id, pair.a.row_index)
            row_b = find_row(charts, pair.b.paper_id, pair.b.row_index)
            if row_a is None or row_b is None:
                raise ValueError(f"Pair {pair.pair_id} references a row missing from the charts")
            resolved.append((pair, row_a, row_b))

        batches = await asyncio.gather(*(self.generate_for_pair(*r) for r in resolved))
        hypotheses = assign_ids(batches)
        self.logger.info(f"Generated {len(hypotheses)} hypotheses from {len(pairs)} pairs "
                         f"({len(self.skipped_pairs)} pairs skipped)")
        return hypotheses


async def generate_for_pair(pair: RowPair, row_a: ChartRow, row_b: ChartRow, n_samples: int,
                            profile: StageProfile, backend: BackendHandle,
                            domain: Optional[DomainProfile] = None) -> List[Hypothesis]:
    generator = HypothesisGenerator(backend, profile, domain=domain, n_samples=n_samples)
    return await generator.generate_for_pair(pair, row_a, row_b)
