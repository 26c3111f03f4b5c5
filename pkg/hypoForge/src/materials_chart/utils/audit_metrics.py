#!/usr/bin/env python3
"""
Audit Metrics

Scoring for human audits of the pipeline:
- HMI (human machine-readability index) of an extracted chart
- Mechanism labeling accuracy, mechanistic accuracy and fidelity
- Confusion metrics of model labels against human annotations

Plus loaders for the three audit CSV files and the dataset roll-up.
"""

import csv
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

CORE_IDEA_DEDUCTION = 20
# Average HMI (as a fraction) and fidelity must both exceed this.
ACCEPTANCE_THRESHOLD = 0.8

_TRUE = {"true", "t", "yes", "y", "1"}
_FALSE = {"false", "f", "no", "n", "0"}


class AnnotationAlignmentError(ValueError):
    """Model and human label sets cover different hypothesis ids."""


def round_half_up(value: float, places: int = 2) -> float:
    """Round the way the reported metrics are rounded (0.125 -> 0.13)."""
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def compute_hmi(incorrect: int, partially_correct: int, correct: int,
                core_idea_present: bool) -> float:
    """
    HMI percentage of one chart.

    Correct actions weigh 1, partially correct 0.5, incorrect 0. A chart that
    misses the paper's core idea loses 20 points, floored at 0.

    Raises:
        ValueError: Negative counts, or no actions at all
    """
    counts = (incorrect, partially_correct, correct)
    if any(c < 0 for c in counts):
        raise ValueError(f"Action counts must be non-negative: {counts}")
    total = sum(counts)
    if total == 0:
        raise ValueError("HMI needs at least one audited action")

    hmi = Fraction(100) * (Fraction(partially_correct, 2) + correct) / total
    if not core_idea_present:
        hmi = max(Fraction(0), hmi - CORE_IDEA_DEDUCTION)
    return float(hmi)


@dataclass
class HmiAudit:
    """Audit counts of one chart."""
    incorrect: int
    partially_correct: int
    correct: int
    core_idea_present: bool
    paper_id: Optional[int] = None

    @property
    def total_actions(self) -> int:
        return self.incorrect + self.partially_correct + self.correct

    @property
    def hmi_percent(self) -> float:
        return compute_hmi(self.incorrect, self.partially_correct, self.correct,
                           self.core_idea_present)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "paper_id": self.paper_id,
            "incorrect": self.incorrect,
            "partially_correct": self.partially_correct,
            "correct": self.correct,
            "total_actions": self.total_actions,
            "core_idea_present": self.core_idea_present,
            "hmi_percent": self.hmi_percent,
        }


@dataclass
class MechanismAudit:
    flags: List[Tuple[bool, bool]] = field(default_factory=list)
    labeling_accuracy: float = 0.0
    mechanistic_accuracy: float = 0.0
    fidelity: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mechanisms": len(self.flags),
            "labeling_accuracy": self.labeling_accuracy,
            "mechanistic_accuracy": self.mechanistic_accuracy,
            "fidelity": self.fidelity,
        }


def compute_mechanism_scores(flags: Sequence[Tuple[bool, bool]]) -> MechanismAudit:
    """
    Score audited mechanisms.

    Args:
        flags: (label_correct, mechanistic_correct) per mechanism

    Returns:
        MechanismAudit; fidelity is the share that is correct on both counts

    Raises:
        ValueError: No flags
    """
    if not flags:
        raise ValueError("Mechanism audit needs at least one mechanism")
    n = len(flags)
    return MechanismAudit(
        flags=[(bool(a), bool(b)) for a, b in flags],
        labeling_accuracy=sum(1 for a, _ in flags if a) / n,
        mechanistic_accuracy=sum(1 for _, b in flags if b) / n,
        fidelity=sum(1 for a, b in flags if a and b) / n,
    )


@dataclass
class ConfusionMetrics:
    """Counts and rates; a rate with a zero denominator is None."""
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
        }

    def summary(self) -> str:
        """accuracy (0.79), precision (0.70), recall (0.83), and F1 (0.76)"""
        def fmt(value: Optional[float]) -> str:
            return "n/a" if value is None else f"{round_half_up(value):.2f}"
        return (f"accuracy ({fmt(self.accuracy)}), precision ({fmt(self.precision)}), "
                f"recall ({fmt(self.recall)}), and F1 ({fmt(self.f1)})")


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


def f1_score(precision: Optional[float], recall: Optional[float]) -> Optional[float]:
    """Harmonic mean of precision and recall, None when undefined."""
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * precision * recall / (precision + recall)


def confusion_metrics(tp: int, fp: int, fn: int, tn: int) -> ConfusionMetrics:
    """
    Accuracy, precision, recall and F1 from confusion counts.

    Raises:
        ValueError: Negative counts or an empty confusion matrix
    """
    if min(tp, fp, fn, tn) < 0:
        raise ValueError("Confusion counts must be non-negative")
    total = tp + fp + fn + tn
    if total < 1:
        raise ValueError("Confusion metrics need at least one item")

    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    return ConfusionMetrics(
        tp=tp, fp=fp, fn=fn, tn=tn,
        accuracy=_ratio(tp + tn, total),
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
    )


def compare_with_human(model_labels: Mapping[int, str], human_labels: Mapping[int, str],
                       positive_label: str) -> ConfusionMetrics:
    """
    Confusion metrics of model labels, human labels taken as ground truth.

    Args:
        model_labels: hypothesis_id -> model label
        human_labels: hypothesis_id -> human label
        positive_label: Label counted as positive (e.g. "Synergistic")

    Raises:
        AnnotationAlignmentError: The two mappings cover different ids
    """
    missing_model = sorted(set(human_labels) - set(model_labels))
    missing_human = sorted(set(model_labels) - set(human_labels))
    if missing_model or missing_human:
        raise AnnotationAlignmentError(
            f"Label sets not aligned: missing model labels for {missing_model}, "
            f"missing human labels for {missing_human}"
        )

    tp = fp = fn = tn = 0
    for hypothesis_id in sorted(human_labels):
        predicted = model_labels[hypothesis_id] == positive_label
        actual = human_labels[hypothesis_id] == positive_label
        if predicted and actual:
            tp += 1
        elif predicted:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    return confusion_metrics(tp, fp, fn, tn)


def _parse_bool(value: str, path: Path, line: int) -> bool:
    text = value.strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ValueError(f"{path}:{line}: not a boolean: {value!r}")


def _read_rows(path: Path, required: Sequence[str]) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f, skipinitialspace=True)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        return list(reader)


def load_annotations(path: Path) -> Dict[int, Tuple[str, str]]:
    """annotations.csv -> hypothesis_id: (synergy_label, grounding_label)."""
    rows = _read_rows(path, ("hypothesis_id", "synergy_label", "grounding_label"))
    annotations: Dict[int, Tuple[str, str]] = {}
    for row in rows:
        hypothesis_id = int(row["hypothesis_id"])
        if hypothesis_id in annotations:
            logger.warning(f"Duplicate annotation for hypothesis {hypothesis_id}, keeping the last")
        annotations[hypothesis_id] = (row["synergy_label"].strip(), row["grounding_label"].strip())
    logger.info(f"Loaded {len(annotations)} human annotations from {path}")
    return annotations


def load_chart_audits(path: Path) -> List[HmiAudit]:
    """Chart audit CSV: paper_id, incorrect, partially_correct, correct, core_idea_present."""
    rows = _read_rows(path, ("paper_id", "incorrect", "partially_correct", "correct",
                             "core_idea_present"))
    return [
        HmiAudit(
            paper_id=int(row["paper_id"]),
            incorrect=int(row["incorrect"]),
            partially_correct=int(row["partially_correct"]),
            correct=int(row["correct"]),
            core_idea_present=_parse_bool(row["core_idea_present"], path, line),
        )
        for line, row in enumerate(rows, start=2)
    ]


def load_mechanism_audits(path: Path) -> Dict[int, List[Tuple[bool, bool]]]:
    """Mechanism audit CSV: paper_id, row_index, column, label_correct, mechanistic_correct."""
    rows = _read_rows(path, ("paper_id", "row_index", "column", "label_correct",
                             "mechanistic_correct"))
    flags: Dict[int, List[Tuple[bool, bool]]] = {}
    for line, row in enumerate(rows, start=2):
        flags.setdefault(int(row["paper_id"]), []).append((
            _parse_bool(row["label_correct"], path, line),
            _parse_bool(row["mechanistic_correct"], path, line),
        ))
    return flags


def rollup_extraction_audit(hmi_audits: Sequence[HmiAudit],
                            mechanism_flags: Mapping[int, Sequence[Tuple[bool, bool]]]) -> Dict[str, Any]:
    """
    Per-paper and dataset-level extraction audit.

    meets_threshold is true when average HMI/100 and average fidelity both
    exceed 0.8; it is None when either side has no audited papers.
    """
    papers: Dict[int, Dict[str, Any]] = {}
    for audit in hmi_audits:
        papers.setdefault(audit.paper_id, {})["hmi"] = audit.to_dict()
    for paper_id in sorted(mechanism_flags):
        if mechanism_flags[paper_id]:
            papers.setdefault(paper_id, {})["mechanisms"] = \
                compute_mechanism_scores(mechanism_flags[paper_id]).to_dict()

    hmi_values = [p["hmi"]["hmi_percent"] for p in papers.values() if "hmi" in p]
    fidelity_values = [p["mechanisms"]["fidelity"] for p in papers.values() if "mechanisms" in p]
    average_hmi = sum(hmi_values) / len(hmi_values) if hmi_values else None
    average_fidelity = sum(fidelity_values) / len(fidelity_values) if fidelity_values else None

    meets = None
    if average_hmi is not None and average_fidelity is not None:
        meets = average_hmi / 100 > ACCEPTANCE_THRESHOLD and average_fidelity > ACCEPTANCE_THRESHOLD

    return {
        "papers": {str(pid): papers[pid] for pid in sorted(papers)},
        "average_hmi_percent": average_hmi,
        "average_fidelity": average_fidelity,
        "meets_threshold": meets,
    }
