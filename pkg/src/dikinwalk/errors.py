"""Exception hierarchy."""


class DikinError(Exception):
    pass


class DimensionMismatch(DikinError, ValueError):
    pass


class NotPositiveDefinite(DikinError, ArithmeticError):
    pass


class NotInterior(DikinError, ValueError):
    pass


class StaleState(DikinError, RuntimeError):
    """Raised when a solve is requested for weights the solver does not hold."""


class UnsupportedDimension(DikinError, ValueError):
    pass


class TargetEvaluationError(DikinError, ArithmeticError):
    pass


class ConfigError(DikinError, ValueError):
    """Invalid run manifest. ``field`` holds the dotted path of the bad entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class UnsupportedValidation(DikinError, ValueError):
    pass
