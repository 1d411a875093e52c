"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    pass


class DegenerateElementError(ValueError):
    """An element has a non-positive Jacobian determinant or zero measure."""


class ConfigurationError(ValueError):
    """A scheme or run configuration is incomplete or inconsistent."""


class SingularSystemError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    """The linear solve did not reach the requested residual tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigParseError(ConfigurationError):
    """A configuration document is not well-formed; carries the 1-based position."""

    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column
