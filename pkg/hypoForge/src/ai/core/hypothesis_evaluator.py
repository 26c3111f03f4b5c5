#!/usr/bin/env python3
"""
Hypothesis Evaluator - synergy scoring and scientific grounding

Two independent judgments per hypothesis, both sent to the evaluation
backend:
- Synergy: an integer 1-5 score, the sentences carrying the interdependence
  and the core connecting structures. Scores above 3 are Synergistic.
- Grounding: Strong or Weak against the domain's grounding criterion.

A reply that stays unreadable after one repair reprompt leaves that
criterion unevaluated; unevaluated hypotheses are excluded downstream
rather than defaulted to a label.
"""

import asyncio
import logging
import re
from typing import Dict, List, Optional

from llm_gateway.api.llm_client import BackendHandle, LlmGatewayError, LlmRequest
from llm_gateway.config import DomainProfile, StageProfile
from materials_chart.state.hypothesis import (
    EvaluationRecord,
    GroundingEvaluation,
    GroundingLabel,
    Hypothesis,
    SynergyEvaluation,
    SynergyLabel,
)

SYNERGY_THRESHOLD = 3

SYNERGY_PROMPT = """Evaluate whether the materials design hypothesis below is synergistic.

A synergistic hypothesis creates an interdependence in which at least one
mechanism positively influences another (for example, one mechanism supplies
the sites or conditions another needs). An additive hypothesis only combines
mechanisms that act independently.

Score it from 1 (purely additive) to 5 (strongly synergistic). Quote the
sentences that create the interdependence verbatim, and name the core
structures they connect.

Reply in exactly this format:
Score: <integer 1-5>
Interdependence:
- "<sentence quoted from the hypothesis>"
Core structures: <structure>; <structure>

HYPOTHESIS {hypothesis_id}
{text}"""

GROUNDING_PROMPT = """Judge the scientific grounding of the materials design hypothesis below
against the design goal{goal_suffix}.

{criterion}

Reply in exactly this format:
Label: <Strong or Weak>
Rationale: <one or two sentences>

HYPOTHESIS {hypothesis_id}
{text}"""

REPAIR_PROMPT = """Your reply could not be read: {error}
Answer again using exactly the requested format."""

_SCORE_LINE = re.compile(r"^\W*score[*_\s]*:[*_\s]*([+-]?\d+)(?:\s*/\s*5)?[\W_]*$",
                         re.IGNORECASE | re.MULTILINE)
_INTERDEPENDENCE_HEADER = re.compile(r"^\W*interdependence\W*:\s*(.*)$", re.IGNORECASE)
_CORE_LINE = re.compile(r"^\W*core structures\W*:\s*(.*)$", re.IGNORECASE)
_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(.*)$")
_QUOTED = re.compile(r"[\"“]([^\"”]+)[\"”]")
_LABEL_LINE = re.compile(r"^\W*label\W*:\W*(strong|weak)\b", re.IGNORECASE | re.MULTILINE)
_RATIONALE = re.compile(r"^\W*rationale\W*:\s*(.*)", re.IGNORECASE | re.MULTILINE | re.DOTALL)


class EvaluationParseError(ValueError):
    """An evaluation reply does not follow the requested format."""


def classify_synergy(score: int) -> SynergyLabel:
    """
    Map a 1-5 synergy score to its label; above 3 is Synergistic.

    Raises:
        ValueError: Score outside 1..5
    """
    if isinstance(score, bool) or not isinstance(score, int) or not 1 <= score <= 5:
        raise ValueError(f"Synergy score must be an integer in 1..5: {score!r}")
    return SynergyLabel.SYNERGISTIC if score > SYNERGY_THRESHOLD else SynergyLabel.ADDITIVE


def _unquote(text: str) -> str:
    return text.strip().strip("\"“”'").strip()


def parse_synergy_reply(raw: str, hypothesis_id: int) -> SynergyEvaluation:
    """
    Parse a synergy reply.

    Needs exactly one "Score: <int>" line; "Score: 4/5" reads as 4.
    Interdependence sentences come from the bullets under "Interdependence:",
    falling back to quoted sentences anywhere in the reply.

    Raises:
        EvaluationParseError: No score line, a signed score or one outside 1..5,
            several score lines, or a Synergistic score without sentences
    """
    scores = _SCORE_LINE.findall(raw)
    if not scores:
        raise EvaluationParseError("no 'Score: <integer>' line")
    if len(scores) > 1:
        raise EvaluationParseError(f"{len(scores)} score lines, expected one")
    if scores[0][0] in "+-":
        raise EvaluationParseError(f"signed score {scores[0]}, expected 1..5")
    score = int(scores[0])
    if not 1 <= score <= 5:
        raise EvaluationParseError(f"score {score} outside 1..5")

    sentences: List[str] = []
    core: List[str] = []
    in_block = False
    for line in raw.splitlines():
        header = _INTERDEPENDENCE_HEADER.match(line)
        if header:
            in_block = True
            if header.group(1).strip():
                sentences.append(_unquote(header.group(1)))
            continue
        core_match = _CORE_LINE.match(line)
        if core_match:
            core = [s.strip(" *") for s in core_match.group(1).split(";") if s.strip(" *")]
            in_block = False
            continue
        if in_block:
            bullet = _BULLET.match(line)
            if bullet and _unquote(bullet.group(1)):
                sentences.append(_unquote(bullet.group(1)))
            elif line.strip():
                in_block = False

    if not sentences:
        sentences = [s.strip() for s in _QUOTED.findall(raw) if s.strip()]

    label = classify_synergy(score)
    if label is SynergyLabel.SYNERGISTIC and not sentences:
        raise EvaluationParseError(f"score {score} given without interdependence sentences")

    return SynergyEvaluation(hypothesis_id=hypothesis_id, score=score, label=label,
                             interdependence_sentences=sentences, core_structures=core)


def parse_grounding_reply(raw: str, hypothesis_id: int) -> GroundingEvaluation:
    """
    Parse a grounding reply ("Label: Strong|Weak", "Rationale: ...").

    Raises:
        EvaluationParseError: No label line
    """
    labels = {m.lower() for m in _LABEL_LINE.findall(raw)}
    if not labels:
        raise EvaluationParseError("no 'Label: Strong|Weak' line")
    if len(labels) > 1:
        raise EvaluationParseError("both Strong and Weak labels given")

    rationale_match = _RATIONALE.search(raw)
    rationale = " ".join(rationale_match.group(1).split()) if rationale_match else ""
    label = GroundingLabel.STRONG if labels.pop() == "strong" else GroundingLabel.WEAK
    return GroundingEvaluation(hypothesis_id=hypothesis_id, label=label, rationale=rationale)


class HypothesisEvaluator:
    """
    Evaluation stage.

    Hypotheses are evaluated concurrently, both criteria at once. Counts of
    unevaluated hypotheses are kept for the report.
    """

    def __init__(self, backend: BackendHandle, profile: StageProfile, domain: DomainProfile):
        """
        Initialize the evaluator.

        Args:
            backend: Handle on the evaluation backend
            profile: Evaluation stage profile
            domain: Domain whose grounding criterion and design goal are used
        """
        self.backend = backend
        self.profile = profile
        self.domain = domain
        self.logger = logging.getLogger(__name__)
        self.unevaluated: Dict[str, List[int]] = {"synergy": [], "grounding": []}

    async def _ask(self, request: LlmRequest, parse, hypothesis_id: int, what: str):
        """Send, parse, and repair once; None when the reply stays unreadable."""
        try:
            response = await self.backend.complete(request)
            try:
                return parse(response.text, hypothesis_id)
            except EvaluationParseError as e:
                self.logger.warning(f"Hypothesis {hypothesis_id} {what}: {e}, reprompting once")
                repair = request.followup(response.text, REPAIR_PROMPT.format(error=e))

            response = await self.backend.complete(repair)
            return parse(response.text, hypothesis_id)
        except (EvaluationParseError, LlmGatewayError) as e:
            self.logger.warning(f"Hypothesis {hypothesis_id} left without {what} evaluation: {e}")
            self.unevaluated[what].append(hypothesis_id)
            return None

    async def evaluate_synergy(self, hypothesis: Hypothesis) -> Optional[SynergyEvaluation]:
        """Synergy evaluation, or None when the hypothesis stays unevaluated."""
        request = self.profile.request(SYNERGY_PROMPT.format(
            hypothesis_id=hypothesis.hypothesis_id, text=hypothesis.text))
        return await self._ask(request, parse_synergy_reply, hypothesis.hypothesis_id, "synergy")

    async def evaluate_grounding(self, hypothesis: Hypothesis) -> Optional[GroundingEvaluation]:
        """Grounding evaluation, or None when the hypothesis stays unevaluated."""
        goal_suffix = f" ({self.domain.design_goal})" if self.domain.design_goal else ""
        request = self.profile.request(GROUNDING_PROMPT.format(
            goal_suffix=goal_suffix, criterion=self.domain.grounding_criterion,
            hypothesis_id=hypothesis.hypothesis_id, text=hypothesis.text))
        return await self._ask(request, parse_grounding_reply, hypothesis.hypothesis_id, "grounding")

    async def evaluate(self, hypothesis: Hypothesis) -> EvaluationRecord:
        synergy, grounding = await asyncio.gather(self.evaluate_synergy(hypothesis),
                                                  self.evaluate_grounding(hypothesis))
        return EvaluationRecord(hypothesis_id=hypothesis.hypothesis_id,
                                synergy=synergy, grounding=grounding)

    async def evaluate_all(self, hypotheses: List[Hypothesis]) -> List[EvaluationRecord]:
        records = await asyncio.gather(*(self.evaluate(h) for h in hypotheses))
        records = sorted(records, key=lambda r: r.hypothesis_id)
        evaluated = sum(1 for r in records if r.evaluated)
        self.logger.info(f"Evaluated {evaluated}/{len(records)} hypotheses")
        return records


async def evaluate_synergy(hypothesis: Hypothesis, profile: StageProfile,
                           backend: BackendHandle, domain: DomainProfile) -> Optional[SynergyEvaluation]:
    return await HypothesisEvaluator(backend, profile, domain).evaluate_synergy(hypothesis)


async def evaluate_grounding(hypothesis: Hypothesis, domain: DomainProfile,
                             profile: StageProfile, backend: BackendHandle) -> Optional[GroundingEvaluation]:
    return await HypothesisEvaluator(backend, profile, domain).evaluate_grounding(hypothesis)
