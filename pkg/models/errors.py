"""
Exception hierarchy for PrefixForge.
"""

from typing import Any, Dict, List, Optional, Tuple


class PrefixForgeError(RuntimeError):
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"error": type(self).__name__, "message": str(self)}
        payload.update(self.details)
        return payload


class SequenceValidationError(PrefixForgeError):
    """A coordinate sequence breaks the scan-order or merge rules."""

    def __init__(self, message: str, index: int) -> None:
        super().__init__(message, {"index": index})
        self.index = index


class GraphValidationError(PrefixForgeError):
    """A prefix graph breaks the input, output or merge rule."""

    def __init__(
        self,
        message: str,
        rule: str,
        coordinates: Optional[List[Tuple[int, int]]] = None,
    ) -> None:
        coords = [list(c) for c in (coordinates or [])]
        super().__init__(message, {"rule": rule, "coordinates": coords})
        self.rule = rule
        self.coordinates = coordinates or []


class MergeRuleError(GraphValidationError):
    def __init__(self, message: str, coordinates: Optional[List[Tuple[int, int]]] = None) -> None:
        super().__init__(message, "merge", coordinates)


class SamplingError(PrefixForgeError):
    pass


class SynthesisError(PrefixForgeError):
    def __init__(self, message: str, tool_log: str = "", command: Optional[str] = None) -> None:
        details: Dict[str, Any] = {"tool_log": tool_log}
        if command:
            details["command"] = command
        super().__init__(message, details)
        self.tool_log = tool_log


class SynthesisTimeoutError(SynthesisError):
    pass


class CheckpointError(PrefixForgeError):
    pass


class TrainingDivergenceError(PrefixForgeError):
    pass


class DatabaseError(PrefixForgeError):
    pass


class ConfigError(PrefixForgeError):
    pass


class ModelRangeError(ValueError):
    """Model input outside the configured vocabulary or context."""
