"""Exceptions and warnings."""


class ValidationError(RuntimeError):
    """Invalid input or configuration."""


class BlowUpError(RuntimeError):
    """Galerkin run left the decaying regime."""


class FitError(RuntimeError):
    """Not enough usable samples for a decay fit."""


class IngestWarning(UserWarning):
    """A loaded field needed a Leray projection."""


class SeriesWarning(UserWarning):
    """A series prefix shows super-geometric growth."""


def validate(condition, msg):
    """Raise ValidationError unless condition holds."""
    if not condition:
        raise ValidationError(msg)
