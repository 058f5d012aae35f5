"""Exception hierarchy shared across the package."""

from __future__ import annotations


class AFLiteError(Exception):
    """Base class. ``module`` names the subsystem that raised it."""

    module = "aflite"


class InputError(AFLiteError, ValueError):
    module = "core"


class InvalidPartitionError(AFLiteError, ValueError):
    module = "core"


class ContractViolation(AFLiteError, ValueError):
    module = "core"


class DegenerateTrainingError(AFLiteError, ValueError):
    module = "classifiers"


class PhaseError(AFLiteError, RuntimeError):
    module = "aflite"

    def __init__(self, phase: int, cause: BaseException | str):
        self.phase = phase
        self.cause = cause
        super().__init__(f"phase {phase}: {cause}")


class BudgetExceededError(AFLiteError, ValueError):
    module = "afopt"


class InvalidSpecError(AFLiteError, ValueError):
    module = "synthetic"


class ParseError(AFLiteError, ValueError):
    module = "cli"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(AFLiteError, ValueError):
    module = "cli"


class EvaluationError(AFLiteError, ValueError):
    module = "cli"
