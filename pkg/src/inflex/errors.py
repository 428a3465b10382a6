"""Exception types shared across the package.

The CLI maps them onto exit codes: usage 1, data 2, numeric 3.
"""


class InflexError(Exception):
    exit_code = 1


class UsageError(InflexError, ValueError):
    """Caller violated an operation's precondition."""


class DimensionError(UsageError):
    """Tensor shapes do not conform to the op."""


class DomainError(UsageError):
    """Op applied outside its mathematical domain (e.g. softmax over nothing)."""


class VocabularyError(UsageError, KeyError):
    """Symbol or id unknown to the vocabulary."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class DataError(InflexError):
    """Input file is malformed."""

    exit_code = 2


class ParseError(DataError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.path = path
        self.line = line


class NumericError(InflexError):
    """Training produced non-finite values."""

    exit_code = 3
