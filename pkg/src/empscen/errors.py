"""Exception hierarchy shared by all modules."""


class ScenarioError(Exception):
    """Base class for errors raised by empscen."""


class InvalidInputError(ScenarioError, ValueError):
    """Malformed or non-finite input, or non-conformable dimensions."""


class DegenerateError(ScenarioError, ArithmeticError):
    """A quantity that must be divided by is zero."""


class NotPSDError(ScenarioError):
    """A matrix expected to be positive semidefinite is not."""


class NormalizationError(ScenarioError):
    """A moment matrix does not describe a probability measure."""


class FlatnessError(ScenarioError):
    """The residual cannot be reduced using pivots from the leading block."""


class ExtractionError(ScenarioError):
    """Atom extraction failed, e.g. complex joint eigenvalues."""


class NumericalBreakdownError(ScenarioError):
    """A greedy factorization hit a zero pivot with a nonzero residual."""


class ConfigError(ScenarioError, ValueError):
    """Invalid run configuration."""


class InfeasibleError(ScenarioError):
    """An optimization problem has no feasible point."""


class DataFormatError(InvalidInputError):
    """A data file could not be parsed; the message names the line."""
