"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario, kernel, or plan configuration."""


class NumericalError(RuntimeError):
    """NaN/overflow or other numerical breakdown, with a location hint."""

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)
        self.location = location


class ConvergenceFailure(NumericalError):
    """Iterative solver failed to reach tolerance; carries residual history."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class UnsupportedFamilyError(ConfigError):
    """Operation not defined for this duration family (e.g. unbounded hazard)."""
