"""Exception types shared across the package."""


class UnphysicalInputError(ValueError):
    """Input violates a physical precondition (negative mass^2, |beta| >= 1, ...)."""


class BelowThresholdError(ValueError):
    """Decay requested below its kinematic threshold."""


class DegenerateEventError(ValueError):
    """Event has no usable momenta (empty or all-zero)."""


class DegenerateCovarianceError(ValueError):
    """Fit covariance is singular or non-positive."""


class DegenerateSampleError(ValueError):
    """Sample too small or without spread for a width estimate."""


class InsufficientTracksError(ValueError):
    """Vertex reconstruction needs at least two tracks."""


class EventParseError(ValueError):
    """Malformed event file; carries the offending line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EventValidationError(ValueError):
    """Structurally invalid event record (non-topological mother index, ...)."""


class ConfigError(ValueError):
    """Missing or inconsistent configuration."""
