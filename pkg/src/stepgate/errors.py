"""Exception hierarchy shared across the framework.

Every error raised by stepgate derives from :class:`StepgateError`, grouped
by the surface it belongs to so the CLI can map failures onto stable exit
codes (validation, backend, environment, internal).
"""

from __future__ import annotations


class StepgateError(Exception):
    """Base class for all stepgate errors."""


# --- input / data validation ------------------------------------------------

class ValidationFailed(StepgateError):
    """A record or trajectory violates its invariants."""


class EmptyDataset(ValidationFailed):
    """An operation requires at least one record."""


class CorruptRecord(ValidationFailed):
    """A stored record could not be decoded."""

    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


class UnknownInstruction(ValidationFailed):
    """Instruction id not present in the loaded pack."""


class DomainError(ValidationFailed):
    """Numeric argument outside the function's domain."""


# --- backend / wire-format errors --------------------------------------------

class BackendError(StepgateError):
    """Base class for model-backend failures."""


class BackendUnavailable(BackendError):
    """Transport failure after all retries were exhausted."""


class MalformedAction(BackendError):
    """Text does not encode a valid action."""


class MalformedScore(BackendError):
    """Reply did not contain an integer confidence score in 1..5."""


class MalformedIndex(BackendError):
    """Reply did not contain a plan index in range."""


class EmptyPlan(BackendError):
    """Planning reply contained no usable plan items."""


class MissingVariable(BackendError):
    """A template placeholder has no binding."""

    def __init__(self, name: str):
        super().__init__(f"no binding for placeholder {{{{{name}}}}}")
        self.name = name


class UnknownPlaceholder(BackendError):
    """A template body uses a placeholder outside the declared variable set."""

    def __init__(self, name: str):
        super().__init__(f"placeholder {{{{{name}}}}} is not a declared variable")
        self.name = name


# --- environment ---------------------------------------------------------------

class EnvironmentFailure(StepgateError):
    """A device or simulator action could not be carried out."""


# --- episode runtime ------------------------------------------------------------

class InterventionTimeout(StepgateError):
    """No intervention arrived before the episode's deadline."""
