"""Exception hierarchy shared by services, routers and the CLI.

Every error carries a ``category`` the outer layers map to an exit code or
HTTP status: ``usage`` (exit 1), ``numerical`` (exit 2), ``input`` (exit 3).
"""
from typing import Optional


class WorkbenchError(Exception):
    category = "usage"


# Expressions

class ExpressionParseError(WorkbenchError):
    category = "input"


class ExpressionSyntaxError(ExpressionParseError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExpressionParseError):
    def __init__(self, name: str, offset: Optional[int] = None):
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"Unknown identifier '{name}'{where}")
        self.name = name
        self.offset = offset


class InvalidExponentError(ExpressionParseError):
    def __init__(self, token: str, offset: int):
        super().__init__(f"Exponent must be a nonnegative integer, got '{token}' at offset {offset}")
        self.offset = offset


class ExpressionEvaluationError(WorkbenchError):
    category = "numerical"


# Systems and signals

class DimensionError(WorkbenchError):
    pass


class NonFiniteError(WorkbenchError):
    pass


class UnknownModelError(WorkbenchError):
    def __init__(self, model_id: str):
        super().__init__(f"Unknown model id '{model_id}'")
        self.model_id = model_id


class SignalError(WorkbenchError):
    pass


class NoClosedFormError(WorkbenchError):
    pass


class UnboundParameterError(WorkbenchError):
    def __init__(self, names):
        missing = ", ".join(sorted(names))
        super().__init__(f"Unbound parameter(s): {missing}")
        self.names = sorted(names)


# Numerics

class DivergenceError(WorkbenchError):
    category = "numerical"


class SingularSystemError(WorkbenchError):
    category = "numerical"


class NonMinimalError(WorkbenchError):
    pass


class NotEquivalentError(WorkbenchError):
    category = "numerical"


class EstimationError(WorkbenchError):
    category = "numerical"


class UnidentifiableError(WorkbenchError):
    category = "numerical"


class ConvergenceError(WorkbenchError):
    category = "numerical"


class IntervalError(WorkbenchError):
    pass


class PosteriorError(WorkbenchError):
    category = "numerical"


# Files

class InputFileError(WorkbenchError):
    category = "input"


EXIT_CODES = {"usage": 1, "numerical": 2, "input": 3}


def exit_code_for(error: Exception) -> int:
    """Exit code for an error raised anywhere below the CLI."""
    if isinstance(error, WorkbenchError):
        return EXIT_CODES[error.category]
    return EXIT_CODES["usage"]


def http_status_for(error: Exception) -> int:
    """HTTP status for an error raised below the routers."""
    if isinstance(error, UnknownModelError):
        return 404
    if isinstance(error, WorkbenchError) and error.category == "input":
        return 400
    return 422
