"""Shared exception types."""


class CarlesonLabError(Exception):
    """Base class for all library errors."""


class OutsideDomainError(CarlesonLabError, ValueError):
    """A point lies outside the domain the operation requires."""


class ParameterError(CarlesonLabError, ValueError):
    """An argument is outside its documented range."""


class ValidationError(CarlesonLabError, ValueError):
    """A composite input (measure, spec file, point set) violates its invariants."""


class AnalysisError(CarlesonLabError, RuntimeError):
    """A numerical procedure could not produce a trustworthy result."""


class CoverageError(AnalysisError):
    """A candidate net is too sparse to certify a covering construction."""
