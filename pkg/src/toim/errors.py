"""Exception types shared across the package."""


class ToimError(Exception):
    """Base class for all errors raised by toim."""


class ValidationError(ToimError, ValueError):
    """Input data or configuration violates a documented contract.

    The CLI maps this to exit code 1.
    """


class FormatError(ValidationError):
    """A line in an input file could not be parsed."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")
