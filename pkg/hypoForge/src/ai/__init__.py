"""
Pipeline stages and orchestration for hypoForge.

Organized structure:
- core/: the backend-driven stages (chart extraction, hypothesis generation,
  evaluation, idea categorization, chart normalization)
- managers/: pipeline config, run directories and stage orchestration
- scripts/: command-line entry point
- tests/: stage, pipeline and end-to-end suites
"""

from .managers import PipelineConfig, PipelineManager

__all__ = ['PipelineConfig', 'PipelineManager']
