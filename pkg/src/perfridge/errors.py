"""Semantic exception hierarchy shared by all perfridge modules."""

from __future__ import annotations

__all__ = [
    "PerfridgeError",
    "InvalidInput",
    "DimensionMismatch",
    "InvalidCovariance",
    "SingularBlock",
    "SingularSystem",
    "NoBracket",
    "DegenerateDenominator",
    "MissingColumn",
    "ParseError",
    "InsufficientRows",
]


class PerfridgeError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(PerfridgeError, ValueError):
    """Inputs violate a documented precondition (domain, sign, range)."""


class DimensionMismatch(PerfridgeError, ValueError):
    """Array shapes are inconsistent with each other or with the model."""


class InvalidCovariance(PerfridgeError):
    """Assembled covariance is not symmetric positive definite."""


class SingularBlock(PerfridgeError):
    """A covariance block or its Schur complement is numerically singular."""


class SingularSystem(PerfridgeError):
    """A linear system required by a solve is singular or indefinite."""


class NoBracket(PerfridgeError):
    """Root bracketing failed; the scalar equation has no sign change in range."""


class DegenerateDenominator(PerfridgeError):
    """The trace denominator of the risk equivalent is non-positive."""


class MissingColumn(PerfridgeError, KeyError):
    """A dataset recipe references a column absent from the file."""


class ParseError(PerfridgeError):
    """Input file could not be parsed as the documented CSV format."""


class InsufficientRows(PerfridgeError, ValueError):
    """Requested fold sizes exceed the number of available rows."""
