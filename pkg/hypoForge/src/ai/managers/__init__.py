"""
Run Management

Pipeline configuration, run directories and the stage orchestrator.
"""

from .pipeline_config import PipelineConfig, load_config
from .pipeline_manager import STAGES, PipelineManager, StagePrerequisiteError
from .run_store import RunLockedError, RunManifest, RunStore

__all__ = [
    'PipelineConfig', 'load_config', 'STAGES', 'PipelineManager', 'StagePrerequisiteError',
    'RunLockedError', 'RunManifest', 'RunStore',
]
