"""Exception hierarchy shared by all toolkit modules.

Every error raised on malformed input, broken protocol state, or degenerate
data derives from :class:`CaiaError` so callers (and the CLI) can map
failures to exit codes without string matching.
"""

from __future__ import annotations


class CaiaError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(CaiaError):
    """Invalid configuration: bad parameter values, unusable files, missing metadata."""


class MalformedTupleError(CaiaError):
    """An attack tuple is missing a logit, or a logit is non-finite."""


class MalformedScoreError(CaiaError):
    """An attribute-classifier score vector violates the probability contract."""


class EmptyAttackSetError(CaiaError):
    """No usable attack tuples: nothing accepted, or every tuple was skipped."""


class ProtocolError(CaiaError):
    """An oracle response violates the wire contract (row length, finiteness, class count)."""


class TransportError(CaiaError):
    """The oracle endpoint stayed unreachable after the configured retries."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class MissingRecordError(CaiaError):
    """A file-backed oracle has no record for one or more requested keys."""

    def __init__(self, message: str, keys: list[tuple[str, str]] | None = None):
        super().__init__(message)
        self.keys = keys or []


class DomainError(CaiaError):
    """A value outside the attribute space was requested."""


class EvaluationError(CaiaError):
    """Predictions and ground truth cannot be scored against each other."""


class ShapeError(CaiaError):
    """Grid dimensions do not match between an attribution map and a mask."""


class MalformedGridError(CaiaError):
    """An attribution map contains negative or non-finite entries, or a grid file is corrupt."""


class MalformedMaskError(CaiaError):
    """A segmentation mask file contains values other than 0 and 255, or is not 8-bit grayscale."""


class DegenerateSampleError(CaiaError):
    """An attribution map has zero total mass and cannot be normalized."""
