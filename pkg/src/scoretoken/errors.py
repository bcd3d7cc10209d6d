"""Exception types raised across the package."""

from __future__ import annotations


class ScoreTokenError(Exception):
    """Base class for every error raised by scoretoken."""


# codec
class UnknownStrategy(ScoreTokenError, ValueError):
    pass


class CorruptTableFile(ScoreTokenError):
    pass


class DegenerateRange(ScoreTokenError, ValueError):
    pass


class OutOfRange(ScoreTokenError, ValueError):
    pass


class LengthMismatch(ScoreTokenError, ValueError):
    pass


class NonFiniteLogits(ScoreTokenError, ValueError):
    pass


# metrics
class ConstantInput(ScoreTokenError, ValueError):
    """Correlation is undefined because one input has zero variance."""


class TooFewSamples(ScoreTokenError, ValueError):
    pass


# dataset
class ParseError(ScoreTokenError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RangeViolation(ScoreTokenError, ValueError):
    pass


class TooFewRecords(ScoreTokenError, ValueError):
    pass


class NoExtremeRecords(ScoreTokenError, ValueError):
    pass


class MissingExperience(ScoreTokenError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


# scorer
class ShapeMismatch(ScoreTokenError, ValueError):
    pass


class BadTarget(ScoreTokenError, ValueError):
    pass


class NonFiniteLoss(ScoreTokenError, FloatingPointError):
    pass


# annotation
class UnknownTemplate(ScoreTokenError, ValueError):
    pass


class MissingField(ScoreTokenError, KeyError):
    def __init__(self, placeholder: str, template_id: str = ""):
        self.placeholder = placeholder
        where = f" in template {template_id}" if template_id else ""
        super().__init__(f"missing field {placeholder!r}{where}")

    def __str__(self) -> str:
        return str(self.args[0])


class ConditionalUnresolvable(ScoreTokenError, ValueError):
    pass


class UnknownAttribute(ScoreTokenError, ValueError):
    pass


class TransportError(ScoreTokenError):
    """A request failed in transit. ``retryable`` is False for client errors."""

    def __init__(self, message: str, status: int | None = None, retryable: bool = True):
        self.status = status
        self.retryable = retryable
        super().__init__(message)


class Timeout(TransportError):
    pass


class MalformedResponse(ScoreTokenError, ValueError):
    pass


class UnknownCandidate(ScoreTokenError, ValueError):
    pass


# experiments
class AblationError(ScoreTokenError):
    """Wraps a failure inside one (row, seed) cell with its context."""

    def __init__(self, label: str, seed: int, cause: BaseException):
        self.label = label
        self.seed = seed
        self.cause = cause
        super().__init__(f"row {label!r} seed {seed}: {type(cause).__name__}: {cause}")
