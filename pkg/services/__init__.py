"""
Services package for PrefixForge.
"""

from .design_db import DesignDatabase
from .grpo_service import GRPOTrainer
from .hardware_service import SynthesisService

__all__ = [
    "DesignDatabase",
    "GRPOTrainer",
    "SynthesisService",
]
