"""Exception hierarchy shared by every contrastkit module."""


class ContrastkitError(Exception):
    """Base class for all errors raised by contrastkit."""


class InvalidData(ContrastkitError, ValueError):
    """Input matrix is malformed (non-finite entries, too few samples)."""


class InvalidArgument(ContrastkitError, ValueError):
    """A parameter is out of range or shapes do not agree."""


class NumericalFailure(ContrastkitError, ArithmeticError):
    pass


class SingularMatrix(NumericalFailure):
    pass


class RankDeficient(NumericalFailure):
    pass


class InvalidGamma(InvalidArgument):
    """PCPCA contrast strength makes ``n_x - gamma * n_y`` non-positive."""


class DegenerateSpectrum(NumericalFailure):
    """Closed-form estimator would take the square root of a negative value."""

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class DegenerateResponse(InvalidData):
    pass


class DegenerateData(InvalidData):
    pass


class UnsupportedGrid(InvalidArgument):
    pass


class UnsupportedSize(InvalidArgument):
    pass


class InsufficientData(InvalidData):
    pass


class InsufficientFeatures(InvalidData):
    pass


class ParseError(ContrastkitError, ValueError):
    pass


class ConfigError(ContrastkitError, ValueError):
    pass


class NoValidBackground(ContrastkitError):
    """Every candidate background was rejected by the background-validity test."""
