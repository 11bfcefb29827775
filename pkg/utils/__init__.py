"""
Prefix-graph utilities for PrefixForge.
"""

from .prefix_graph import (
    CONSTRUCTORS,
    CoordinateSequence,
    PrefixGraph,
    depth,
    size,
    validate,
)

__all__ = [
    "CONSTRUCTORS",
    "CoordinateSequence",
    "PrefixGraph",
    "depth",
    "size",
    "validate",
]
