#!/usr/bin/env python3
"""
Tests for hypothesis, evaluation and idea records
"""

import pytest

from materials_chart.state.hypothesis import (
    CategorizationState,
    EvaluationRecord,
    GroundingEvaluation,
    GroundingLabel,
    Hypothesis,
    Idea,
    RowPair,
    RowRef,
    SynergyEvaluation,
    SynergyLabel,
    read_jsonl,
    write_jsonl,
)


@pytest.fixture
def hypothesis() -> Hypothesis:
    return Hypothesis(
        pair=RowPair(pair_id=3, a=RowRef(1, 2), b=RowRef(5, 1)),
        text="Pair cryo-rolled nanotwins [1] with L12 precipitates [5] to raise strength at 77 K.",
        cited_papers=[1, 5],
        combined_structures=["Nanotwins", "L12 precipitates"],
        linked_mechanisms=("S->P", "P->S"),
        sample_index=2,
        hypothesis_id=12,
    )


class TestHypothesis:

    def test_dict_form(self, hypothesis):
        data = hypothesis.to_dict()
        assert data["pair"] == {"pair_id": 3, "a": [1, 2], "b": [5, 1]}
        assert data["linked_mechanisms"] == ["S->P", "P->S"]
        assert Hypothesis.from_dict(data) == hypothesis

    def test_unlinked_hypothesis(self, hypothesis):
        hypothesis.linked_mechanisms = None
        assert Hypothesis.from_dict(hypothesis.to_dict()).linked_mechanisms is None


class TestEvaluations:

    def test_synergistic_needs_sentences(self):
        with pytest.raises(ValueError):
            SynergyEvaluation(hypothesis_id=1, score=4, label=SynergyLabel.SYNERGISTIC)

    def test_additive_without_sentences(self):
        evaluation = SynergyEvaluation(hypothesis_id=1, score=2, label=SynergyLabel.ADDITIVE)
        assert evaluation.to_dict()["interdependence_sentences"] == []

    def test_record_dict_form(self):
        record = EvaluationRecord(
            hypothesis_id=4,
            synergy=SynergyEvaluation(4, 5, SynergyLabel.SYNERGISTIC,
                                      ["Twins deflect cracks that precipitates nucleate."], ["Nanotwins"]),
            grounding=GroundingEvaluation(4, GroundingLabel.STRONG, "Twinning is active at 77 K."),
        )
        assert record.evaluated
        restored = EvaluationRecord.from_dict(record.to_dict())
        assert restored.synergy == record.synergy
        assert restored.grounding == record.grounding

    def test_partial_record(self):
        record = EvaluationRecord(hypothesis_id=4, grounding=GroundingEvaluation(4, GroundingLabel.WEAK))
        assert not record.evaluated
        assert EvaluationRecord.from_dict(record.to_dict()).synergy is None


class TestIdea:

    def test_members_are_sorted_and_unique(self):
        idea = Idea(idea_id=1, member_hypotheses=[9, 2, 9, 4])
        assert idea.member_hypotheses == [2, 4, 9]

    def test_idea_needs_members(self):
        with pytest.raises(ValueError):
            Idea(idea_id=1, member_hypotheses=[])

    def test_signature_round_trip(self):
        idea = Idea(idea_id=2, member_hypotheses=[1], structural_entities=["Nanotwins"],
                    core_concept="Twin-assisted strengthening", source_pair_signature={(5, 1), (1, 3)})
        data = idea.to_dict()
        assert data["source_pair_signature"] == [[1, 3], [5, 1]]
        assert Idea.from_dict(data) == idea

    def test_covered_hypotheses(self):
        state = CategorizationState(ideas=[Idea(1, [1, 2]), Idea(2, [2, 5])])
        assert state.covered_hypotheses == {1, 2, 5}


class TestJsonl:

    def test_one_sorted_record_per_line(self, tmp_path, hypothesis):
        path = tmp_path / "nested" / "hypotheses.jsonl"
        write_jsonl([hypothesis.to_dict(), {"b": 1, "a": "77 K → 4 K"}], path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        assert lines[1] == '{"a": "77 K → 4 K", "b": 1}'
        assert read_jsonl(path)[0] == hypothesis.to_dict()
