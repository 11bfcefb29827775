"""
Models package for PrefixForge.

The policy network lives in ``models.policy`` and is imported on demand
so the schemas stay usable without torch.
"""

from .config import RunConfig, load_run_config
from .errors import *
from .schemas import *

__all__ = [
    "RunConfig",
    "load_run_config",
    "PrefixForgeError",
    "GraphPayload",
    "SequencePayload",
    "ValidationReport",
    "DesignMetrics",
    "DesignRecord",
    "IterationReport",
    "PretrainReport",
    "EvalReport",
    "HealthResponse",
]
