"""Exception types raised across the package."""


class AcrobotError(Exception):
    """Base class for all package errors."""


class ModelMismatchError(AcrobotError, ValueError):
    """Parameters or state do not fit the requested link-chain model."""


class SingularMatrixError(AcrobotError, ArithmeticError):
    """A linear system could not be solved because its matrix is singular."""


class DivergenceError(AcrobotError, RuntimeError):
    """A simulation produced a non-finite or runaway state."""

    def __init__(self, message, time):
        super().__init__(f"{message} (t = {time:.6g} s)")
        self.time = time


class EvaluationError(AcrobotError, ArithmeticError):
    """A user-supplied function returned NaN or Inf."""

    def __init__(self, message, y):
        super().__init__(message)
        self.y = y


class ConfigError(AcrobotError, ValueError):
    """Invalid configuration or input file.

    ``key`` names the offending entry and ``line`` its 1-based line, when known.
    """

    def __init__(self, message, key=None, line=None):
        where = ""
        if key is not None:
            where += f"[{key}] "
        if line is not None:
            where += f"(line {line}) "
        super().__init__(where + message)
        self.key = key
        self.line = line
