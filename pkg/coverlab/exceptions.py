"""Custom exceptions for coverlab."""

from __future__ import annotations

from typing import Any, Optional, Sequence, Tuple


class CoverlabError(Exception):
    """Base exception for all coverlab failures."""


class MdpStructureError(CoverlabError):
    """Raised when an MDP's tables have malformed shapes.

    Attributes:
        coordinates: Layer/state/action coordinates of the offending entry, when known.
    """

    def __init__(self, message: str, coordinates: Optional[Tuple[int, ...]] = None) -> None:
        if coordinates is not None:
            message = f"{message} (at {coordinates})"
        super().__init__(message)
        self.coordinates = coordinates


class FamilyStructureError(CoverlabError):
    """Raised when a value-function family is inconsistent with its MDP."""


class EmptyConfidenceSetError(CoverlabError):
    """Raised when a confidence set becomes empty and the algorithm cannot proceed.

    Attributes:
        partial_log: Whatever the algorithm recorded before aborting.
    """

    def __init__(self, message: str, partial_log: Any = None) -> None:
        super().__init__(message)
        self.partial_log = partial_log


class SearchBudgetExceededError(CoverlabError):
    """Raised when an exhaustive search would exceed its evaluation budget."""


class BisectionBracketError(CoverlabError):
    """Raised when a bisection cannot bracket its target.

    Attributes:
        bounds: The (lower, upper) bracket that failed.
    """

    def __init__(self, message: str, bounds: Sequence[float]) -> None:
        super().__init__(f"{message} (bracket {tuple(bounds)})")
        self.bounds = tuple(bounds)


class ConstructionError(CoverlabError):
    """Raised when an instance generator receives invalid parameters."""


class InstanceFormatError(CoverlabError):
    """Raised when an instance file cannot be read or fails schema validation."""


class ExperimentConfigError(CoverlabError):
    """Raised when an experiment configuration is malformed.

    Attributes:
        key: Dotted path of the offending key, when known.
    """

    def __init__(self, message: str, key: Optional[str] = None) -> None:
        if key:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key


class ReportGenerationError(CoverlabError):
    """Raised when an artifact cannot be written."""
