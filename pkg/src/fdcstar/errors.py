"""Exception hierarchy. Every domain error derives from :class:`FdcstarError`."""


class FdcstarError(Exception):
    """Base class for domain errors (CLI exit code 1, except ParseError)."""


class InvalidAlgebra(FdcstarError):
    pass


class AlgebraMismatch(FdcstarError):
    pass


class NumericError(FdcstarError):
    pass


class ConfigError(FdcstarError):
    pass


class ParseError(FdcstarError):
    """Syntax error in formula text; carries a 1-based line and column."""

    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


class BindingError(FdcstarError):
    pass


class BallViolation(FdcstarError):
    pass


class InvalidArg(FdcstarError):
    pass


class NoSpectralGap(FdcstarError):
    pass


class CorrectionFailed(FdcstarError):
    pass


class NotProbeable(FdcstarError):
    pass


class InvalidLevel(FdcstarError):
    pass


class NotUhfDiagram(FdcstarError):
    pass
