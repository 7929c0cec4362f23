"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class CQGGADMMError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(CQGGADMMError, ValueError):
    pass


class DimensionMismatch(CQGGADMMError, ValueError):
    pass


# topology


class TopologyError(CQGGADMMError, ValueError):
    pass


class InvalidEdge(TopologyError):
    pass


class NotConnected(TopologyError):
    pass


class NotBipartite(TopologyError):
    pass


# data


class InsufficientData(CQGGADMMError, ValueError):
    pass


class ParseError(CQGGADMMError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(CQGGADMMError, ValueError):
    pass


# numerics; the CLI maps these to exit code 3


class NumericError(CQGGADMMError, ArithmeticError):
    pass


class NoConverge(NumericError):
    def __init__(self, message: str, iterations: int | None = None):
        self.iterations = iterations
        super().__init__(message)


class SingularSystem(NumericError):
    pass


class BitBudgetExceeded(NumericError):
    def __init__(self, message: str, required_bits: int | None = None):
        self.required_bits = required_bits
        super().__init__(message)


class InvariantViolation(NumericError, AssertionError):
    pass


# codec


class CodeOutOfRange(CQGGADMMError, ValueError):
    pass


class MalformedPayload(CQGGADMMError, ValueError):
    pass


# configuration; the CLI maps these to exit code 2


class ConfigError(CQGGADMMError, ValueError):
    pass


class ConfigParseError(ConfigError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if key is not None:
            prefix.append(f"key {key!r}")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class ConfigValidationError(ConfigError):
    pass


# metrics


class MissingReference(CQGGADMMError, ValueError):
    pass


class NonPositiveSeries(CQGGADMMError, ValueError):
    pass
