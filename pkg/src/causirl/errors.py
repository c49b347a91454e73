"""Exception types raised across the package."""


class CausirlError(Exception):
    """Base class; ``kind`` is the short tag printed by the CLI."""

    kind = "error"


class ConfigurationError(CausirlError, ValueError):
    kind = "config"


class ShapeError(CausirlError, ValueError):
    kind = "shape"


class DegenerateBatchError(CausirlError, ValueError):
    kind = "degenerate-batch"


class NumericError(CausirlError, ArithmeticError):
    kind = "numeric"


class ContractError(CausirlError, RuntimeError):
    kind = "contract"


class InputError(CausirlError, ValueError):
    kind = "input"


class ParseError(InputError):
    kind = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateColumnError(InputError):
    kind = "degenerate-column"


class IntegrityError(CausirlError):
    kind = "integrity"


class ScheduleOverrunWarning(UserWarning):
    pass
