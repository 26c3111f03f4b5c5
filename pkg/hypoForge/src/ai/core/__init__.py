"""
Pipeline Stages

Each stage takes a gateway-bound backend handle and its stage profile, and
turns one artifact type into the next.
"""

from .chart_extractor import ChartExtractor, ExtractionError, ExtractionOutcome
from .hypothesis_generator import HypothesisGenerator, enumerate_pairs, parse_hypothesis
from .hypothesis_evaluator import HypothesisEvaluator, classify_synergy
from .idea_categorizer import IdeaCategorizer, chunk_pool, coverage_report, filter_pool
from .chart_normalizer import ChartNormalizer

__all__ = [
    'ChartExtractor', 'ExtractionError', 'ExtractionOutcome',
    'HypothesisGenerator', 'enumerate_pairs', 'parse_hypothesis',
    'HypothesisEvaluator', 'classify_synergy',
    'IdeaCategorizer', 'chunk_pool', 'coverage_report', 'filter_pool',
    'ChartNormalizer',
]
