"""Exception hierarchy.

Two families exist so the command line can map them onto exit codes:
``ContractError`` (bad input shape, format, or precondition, exit code 2)
and ``NumericError`` (degenerate numeric input, exit code 3).
"""


class SaliencyError(ValueError):
    """Base class for all errors raised by this package."""


class ContractError(SaliencyError):
    pass


class NumericError(SaliencyError):
    pass


# numeric
class NonFinite(NumericError):
    pass


class NegativeValue(NumericError):
    pass


class ZeroMass(NumericError):
    pass


class DegenerateMap(NumericError):
    pass


class ZeroVariance(NumericError):
    pass


class ZeroCenterbias(NumericError):
    pass


# contract
class NegativeSigma(ContractError):
    pass


class ShapeMismatch(ContractError):
    pass


class EmptyFixations(ContractError):
    pass


EmptySet = EmptyFixations


class OutOfBounds(ContractError):
    pass


class MissingCenterbias(ContractError):
    pass


class EmptyDataset(ContractError):
    pass


class EmptyAfterExclusion(ContractError):
    pass


class TooFewStimuli(ContractError):
    pass


class FormatError(ContractError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvariantViolation(ContractError):
    pass


class CapReached(RuntimeWarning):
    """Emitted when the SIM optimizer hits its hard sample cap."""
