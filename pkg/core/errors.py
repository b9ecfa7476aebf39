# core/errors.py
from typing import Optional


class SigselError(Exception):
    """Base class for every error raised by the verification pipeline."""


class DimensionError(SigselError):
    """Vectors, masks or models disagree on the feature dimension."""


class InvalidMaskError(SigselError):
    """A feature mask selects no features."""


class ConfigurationError(SigselError):
    """Run parameters or a config file are invalid for the requested operation."""


class ProtocolError(SigselError):
    """An evaluation protocol invariant was violated (overlapping writers, reused references)."""


class FusionError(SigselError):
    """Score fusion was asked to combine nothing."""


class TrainingError(SigselError):
    """The dichotomizer cannot be trained on the given samples."""


class ConvergenceError(TrainingError):
    """The dual solver stopped without satisfying the KKT conditions."""

    def __init__(self, message: str, worst_violation: Optional[float] = None):
        super().__init__(message)
        self.worst_violation = worst_violation


class MetricError(SigselError):
    """A rate cannot be computed because a class of queries is missing."""


class DatasetError(SigselError):
    """A dataset, manifest or run artifact is missing or malformed."""


class ReportError(SigselError):
    """Run directories do not hold the summaries a report needs."""
