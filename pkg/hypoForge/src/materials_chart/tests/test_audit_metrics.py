#!/usr/bin/env python3
"""
Tests for audit metrics and audit file loaders
"""

import random

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from materials_chart.utils.audit_metrics import (
    AnnotationAlignmentError,
    HmiAudit,
    compare_with_human,
    compute_hmi,
    compute_mechanism_scores,
    confusion_metrics,
    load_annotations,
    load_chart_audits,
    load_mechanism_audits,
    rollup_extraction_audit,
    round_half_up,
)

COUNTS = st.integers(min_value=0, max_value=500)


class TestHmi:

    @pytest.mark.parametrize("counts,core_idea,expected", [
        ((0, 0, 10), True, 100.0),
        ((0, 0, 10), False, 80.0),
        ((4, 0, 6), True, 60.0),
        ((0, 4, 6), False, 60.0),
        ((10, 0, 0), False, 0.0),
        ((1, 2, 7), True, 80.0),
        ((1, 2, 7), False, 60.0),
    ])
    def test_examples(self, counts, core_idea, expected):
        assert compute_hmi(*counts, core_idea) == expected

    @given(COUNTS, COUNTS, COUNTS)
    def test_strictly_increasing_in_correct(self, incorrect, partial, correct):
        assume(incorrect + partial > 0)
        before = compute_hmi(incorrect, partial, correct, True)
        assert compute_hmi(incorrect, partial, correct + 1, True) > before

    @given(COUNTS, COUNTS, COUNTS)
    def test_strictly_increasing_in_correct_at_fixed_total(self, incorrect, partial, correct):
        assume(incorrect > 0 and partial > 0)
        before = compute_hmi(incorrect, partial, correct, True)
        assert compute_hmi(incorrect - 1, partial, correct + 1, True) > before
        assert compute_hmi(incorrect, partial - 1, correct + 1, True) > before

    @given(COUNTS, COUNTS, COUNTS)
    def test_missing_core_idea_costs_twenty_points(self, incorrect, partial, correct):
        assume(incorrect + partial > 0)
        with_core = compute_hmi(incorrect, partial, correct, True)
        without_core = compute_hmi(incorrect, partial, correct, False)
        assert without_core == pytest.approx(max(0.0, with_core - 20.0))
        assert compute_hmi(incorrect, partial, correct + 1, False) >= without_core

    def test_scaling_counts_keeps_hmi(self):
        rng = random.Random(11)
        for _ in range(1000):
            counts = [rng.randint(0, 30) for _ in range(3)]
            if sum(counts) == 0:
                counts[2] = 1
            core_idea = rng.random() < 0.5
            k = rng.randint(2, 9)
            base = compute_hmi(*counts, core_idea)
            assert 0.0 <= base <= 100.0
            assert compute_hmi(*(c * k for c in counts), core_idea) == base

    @pytest.mark.parametrize("counts", [(0, 0, 0), (-1, 2, 3)])
    def test_invalid_counts(self, counts):
        with pytest.raises(ValueError):
            compute_hmi(*counts, True)

    def test_audit_record(self):
        audit = HmiAudit(incorrect=1, partially_correct=2, correct=7, core_idea_present=True, paper_id=3)
        assert audit.total_actions == 10
        assert audit.to_dict()["hmi_percent"] == 80.0


class TestMechanismScores:

    def test_scores(self):
        audit = compute_mechanism_scores([(True, True), (True, False), (False, True), (True, True)])
        assert audit.labeling_accuracy == 0.75
        assert audit.mechanistic_accuracy == 0.75
        assert audit.fidelity == 0.5
        assert audit.to_dict()["mechanisms"] == 4

    def test_empty(self):
        with pytest.raises(ValueError):
            compute_mechanism_scores([])


class TestConfusionMetrics:

    def test_rates(self):
        metrics = confusion_metrics(tp=5, fp=1, fn=2, tn=2)
        assert metrics.accuracy == pytest.approx(0.7)
        assert metrics.precision == pytest.approx(5 / 6)
        assert metrics.recall == pytest.approx(5 / 7)
        assert metrics.f1 == pytest.approx(10 / 13)
        assert metrics.summary() == "accuracy (0.70), precision (0.83), recall (0.71), and F1 (0.77)"

    @pytest.mark.parametrize("tp,fp,fn,expected", [
        (581, 249, 119, 0.76),
        (984, 41, 216, 0.88),
    ])
    def test_reported_f1(self, tp, fp, fn, expected):
        assert round_half_up(confusion_metrics(tp, fp, fn, 0).f1) == expected

    def test_undefined_rates_are_none(self):
        metrics = confusion_metrics(tp=0, fp=0, fn=0, tn=3)
        assert metrics.accuracy == 1.0
        assert (metrics.precision, metrics.recall, metrics.f1) == (None, None, None)
        assert "precision (n/a)" in metrics.summary()

    def test_empty_matrix(self):
        with pytest.raises(ValueError):
            confusion_metrics(0, 0, 0, 0)

    def test_round_half_up(self):
        assert round_half_up(0.125) == 0.13
        assert round_half_up(0.7595) == 0.76


class TestCompareWithHuman:

    def test_counts(self):
        model = {1: "Synergistic", 2: "Synergistic", 3: "Additive", 4: "Additive"}
        human = {1: "Synergistic", 2: "Additive", 3: "Synergistic", 4: "Additive"}
        metrics = compare_with_human(model, human, "Synergistic")
        assert (metrics.tp, metrics.fp, metrics.fn, metrics.tn) == (1, 1, 1, 1)

    def test_unaligned_ids(self):
        with pytest.raises(AnnotationAlignmentError, match=r"\[3\]"):
            compare_with_human({1: "Strong", 2: "Weak"}, {1: "Strong", 2: "Weak", 3: "Weak"}, "Strong")


class TestLoaders:

    def test_annotations(self, tmp_path, caplog):
        path = tmp_path / "annotations.csv"
        path.write_text("hypothesis_id,synergy_label,grounding_label\n"
                        "1, Synergistic, Strong\n2,Additive,Weak\n2,Synergistic,Weak\n", encoding="utf-8")
        annotations = load_annotations(path)
        assert annotations == {1: ("Synergistic", "Strong"), 2: ("Synergistic", "Weak")}
        assert "Duplicate annotation for hypothesis 2" in caplog.text

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "annotations.csv"
        path.write_text("hypothesis_id,synergy_label\n1,Synergistic\n", encoding="utf-8")
        with pytest.raises(ValueError, match="grounding_label"):
            load_annotations(path)

    def test_chart_audits(self, tmp_path):
        path = tmp_path / "charts.csv"
        path.write_text("paper_id,incorrect,partially_correct,correct,core_idea_present\n"
                        "1,0,0,10,yes\n2,0,0,10,False\n", encoding="utf-8")
        audits = load_chart_audits(path)
        assert [a.hmi_percent for a in audits] == [100.0, 80.0]

    def test_bad_boolean_names_the_line(self, tmp_path):
        path = tmp_path / "charts.csv"
        path.write_text("paper_id,incorrect,partially_correct,correct,core_idea_present\n"
                        "1,0,0,10,maybe\n", encoding="utf-8")
        with pytest.raises(ValueError, match=":2:"):
            load_chart_audits(path)

    def test_mechanism_audits(self, tmp_path):
        path = tmp_path / "mechanisms.csv"
        path.write_text("paper_id,row_index,column,label_correct,mechanistic_correct\n"
                        "1,1,P->S,true,true\n1,1,S->P,true,false\n2,1,P->S,1,1\n", encoding="utf-8")
        assert load_mechanism_audits(path) == {1: [(True, True), (True, False)], 2: [(True, True)]}


class TestRollup:

    def test_threshold_met(self):
        audits = [HmiAudit(0, 1, 9, True, paper_id=1), HmiAudit(0, 0, 10, True, paper_id=2)]
        flags = {1: [(True, True)] * 9 + [(True, False)], 2: [(True, True)]}
        rollup = rollup_extraction_audit(audits, flags)
        assert rollup["average_hmi_percent"] == pytest.approx(97.5)
        assert rollup["average_fidelity"] == pytest.approx(0.95)
        assert rollup["meets_threshold"] is True
        assert list(rollup["papers"]) == ["1", "2"]

    def test_threshold_missed(self):
        audits = [HmiAudit(0, 0, 10, False, paper_id=1)]
        rollup = rollup_extraction_audit(audits, {1: [(True, True)]})
        assert rollup["meets_threshold"] is False

    def test_threshold_unknown_without_fidelity(self):
        rollup = rollup_extraction_audit([HmiAudit(0, 0, 10, True, paper_id=1)], {})
        assert rollup["average_fidelity"] is None
        assert rollup["meets_threshold"] is None
