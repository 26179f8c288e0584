"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value is out of range.

    `field` names the offending entry using dotted config notation,
    e.g. ``band.w``.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class AccuracyError(ArithmeticError):
    """A numerical approximation missed its tolerance.

    `achieved` carries the bound that was actually reached.
    """

    def __init__(self, message, achieved, tolerance):
        super().__init__(f"{message} (achieved {achieved:.3e}, tolerance {tolerance:.3e})")
        self.achieved = achieved
        self.tolerance = tolerance


class CapViolation(AssertionError):
    """A measured constant exceeded its regression cap."""
