"""Exception types shared across the package."""


class ProbeflowError(Exception):
    """Base class for all package errors."""


class ConfigError(ProbeflowError):
    """Invalid configuration: bad shapes, ranges, CFL violation, malformed JSON."""


class DomainError(ProbeflowError):
    """Query or value outside the physical domain (density range, space-time box)."""


class GeometryError(ProbeflowError):
    """Degenerate sampling geometry, e.g. collocation acceptance collapses."""


class NumericsError(ProbeflowError):
    """Non-finite value met during numerics.

    Carries an optional tag naming the offending loss term or pipeline stage.
    """

    def __init__(self, message: str, tag: str | None = None):
        super().__init__(message if tag is None else f"[{tag}] {message}")
        self.tag = tag
