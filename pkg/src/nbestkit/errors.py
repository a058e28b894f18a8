"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: validation/parse problems exit 2,
scorer subprocess problems exit 3, and plain I/O errors (``OSError``)
exit 4.
"""


class ToolkitError(Exception):
    """Base class for all toolkit-raised errors."""


class ValidationError(ToolkitError):
    """Input violates a documented invariant (bad id order, NaN weight, ...)."""


class ParseError(ValidationError):
    """A file does not conform to its documented grammar."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AlignmentError(ValidationError):
    """Parallel inputs disagree on length."""


class BudgetError(ValidationError):
    """An exhaustive operation would exceed its configured budget."""


class ScorerError(ToolkitError):
    """Base class for external-scorer failures."""


class ScorerTimeoutError(ScorerError):
    """The scorer did not answer within the configured timeout."""


class ScorerProtocolError(ScorerError):
    """The scorer violated the line protocol (bad handshake, non-numeric reply)."""


class ScorerCrashError(ScorerError):
    """The scorer process exited before answering; carries captured stderr."""

    def __init__(self, message: str, stderr: str = ""):
        if stderr:
            message = f"{message}\nscorer stderr:\n{stderr}"
        super().__init__(message)
        self.stderr = stderr
