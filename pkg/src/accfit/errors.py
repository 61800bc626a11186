"""Exception hierarchy shared by all accfit modules."""


class AccfitError(Exception):
    """Base class for all package errors."""


class ConfigError(AccfitError, ValueError):
    """Invalid model, parameter or optimizer configuration."""


class DataFormatError(AccfitError, ValueError):
    """Input file does not follow the expected layout."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataError(AccfitError, ValueError):
    """Input data are readable but physically inconsistent (e.g. negative speed)."""


class DomainError(AccfitError, ValueError):
    """Function evaluated outside its mathematical domain."""


class NumericalError(AccfitError, ArithmeticError):
    """Simulation produced a non-finite state."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class DegenerateInputError(AccfitError, ValueError):
    """A normalisation constant is zero, so the requested statistic is meaningless."""


class StateError(AccfitError, RuntimeError):
    """Stateful helper queried before it holds any data."""


class CalibrationError(AccfitError, RuntimeError):
    """Optimizer never found a collision-free parameter set."""

    def __init__(self, message, evaluations=None):
        super().__init__(message)
        self.evaluations = evaluations
