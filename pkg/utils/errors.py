"""Exception hierarchy shared by every module and mapped to CLI exit codes."""

from typing import Optional


class DistillError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ContractError(DistillError):
    """A precondition of an operation was violated."""

    exit_code = 2


class DimensionError(ContractError):
    """Operand shapes are incompatible."""


class NumericError(DistillError):
    """A computation produced a non-finite value."""

    exit_code = 4


class DivergenceError(NumericError):
    """An optimisation objective became non-finite."""

    def __init__(self, message: str, iteration: int, context: Optional[dict] = None):
        super().__init__(message)
        self.iteration = iteration
        self.context = context or {}


class BudgetError(DistillError):
    """The requested distillation budget cannot be honoured."""

    exit_code = 2


class ConvergenceError(DistillError):
    """Training finished without reaching its accuracy target."""

    exit_code = 4

    def __init__(self, message: str, accuracy: float):
        super().__init__(message)
        self.accuracy = accuracy


class ArtifactError(DistillError):
    """A run artifact is missing, stale or incompatible."""

    exit_code = 3

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class CorruptBundleError(ArtifactError):
    """A distilled bundle does not have consistent shapes."""


class ConfigError(DistillError):
    """The run configuration is invalid."""

    exit_code = 2
