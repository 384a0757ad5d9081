"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes (2 config, 3 data, 4 numeric).
"""


class FlplError(Exception):
    exit_code = 1


class ContractViolation(FlplError, ValueError):
    """A caller broke a documented precondition (shapes, ranges, emptiness)."""


class ConfigError(FlplError, ValueError):
    exit_code = 2


class DataFormatError(FlplError, ValueError):
    exit_code = 3


class NumericError(FlplError, ArithmeticError):
    exit_code = 4


class DegenerateAggregationError(FlplError, ValueError):
    """Aggregation was asked to average over an empty, zero-weight set."""

    exit_code = 4
