"""Exception types shared across the package."""


class HorolabError(Exception):
    """Base class for all package errors."""


class NonUnimodular(HorolabError):
    """Input matrix determinant is not 1 within tolerance."""


class Degenerate(HorolabError):
    """Matrix columns are numerically collinear."""


class DegenerateLattice(HorolabError):
    """Holonomy basis too degenerate to evaluate a direction sup."""


class CutoffTooLarge(HorolabError):
    """Saddle-connection enumeration would exceed the configured size limit."""


class ChartViolation(HorolabError):
    """Endpoints are too far apart for a single-chart path computation."""


class ViolationFound(HorolabError):
    """A hard inequality check failed; carries the offending record."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class BoundViolation(ViolationFound):
    """A closed-form bound was exceeded beyond its stated slack."""


class InsufficientSignal(HorolabError):
    """Too few data points rise above the noise floor to fit a rate."""


class RangeError(HorolabError):
    """Parameter outside the open interval required by a formula."""


class DomainError(HorolabError):
    """Parameter outside the domain of a closed-form bound."""


class DegenerateScales(HorolabError):
    """Scale list too short or too narrow for a log-log slope fit."""


class ConfigError(HorolabError):
    """Run configuration failed schema validation."""
