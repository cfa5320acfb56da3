"""Exception taxonomy shared by all edgecl modules."""


class EdgeclError(Exception):
    """Base class for all library errors."""


class ShapeError(EdgeclError, ValueError):
    """Array dimensions are inconsistent with the operation's contract."""


class InputError(EdgeclError, ValueError):
    """A value is outside the operation's domain (bad label, empty data, ...)."""


class DegenerateInputError(EdgeclError, ValueError):
    """Input is structurally valid but numerically degenerate (e.g. all-zero
    feature matrix after centering)."""


class StateError(EdgeclError, RuntimeError):
    """An operation was called before its required state exists."""


class TraceParseError(EdgeclError, ValueError):
    """An arrival-trace file could not be parsed.

    Carries the 1-based line number of the offending row.
    """

    def __init__(self, line_number: int, message: str):
        super().__init__(f"trace line {line_number}: {message}")
        self.line_number = line_number


class ConfigError(EdgeclError, ValueError):
    """A run configuration failed validation. CLI exit code 2."""


class NumericError(EdgeclError, RuntimeError):
    """Training produced non-finite values. CLI exit code 3.

    ``diagnostics`` holds a state dump (round id, iteration, loss, ...)
    for post-mortem inspection.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
