"""
Typed records shared by every pipeline stage.
"""

from .system_chart import (
    NA,
    ChartRow,
    Mechanism,
    MechanismSource,
    SubTable1,
    SubTable1Row,
    SubTable2,
    SubTable2Row,
    SystemChart,
    join_subtables,
    validate_chart,
)
from .hypothesis import (
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
)

__all__ = [
    'NA', 'ChartRow', 'Mechanism', 'MechanismSource', 'SubTable1', 'SubTable1Row', 'SubTable2',
    'SubTable2Row', 'SystemChart', 'join_subtables', 'validate_chart',
    'CategorizationState', 'EvaluationRecord', 'GroundingEvaluation', 'GroundingLabel',
    'Hypothesis', 'Idea', 'RowPair', 'RowRef', 'SynergyEvaluation', 'SynergyLabel',
]
