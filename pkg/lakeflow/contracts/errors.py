from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from lakeflow.contracts.control_models import MpcRunRecord


class LakeflowError(Exception):
    """
    Base of every error raised on purpose by lakeflow.

    `exit_code` is what the command line returns when the error escapes a command.
    """

    exit_code: int = 1


class InputError(LakeflowError):
    """
    The caller handed us something unusable: bad files, bad values, bad preconditions.
    """

    exit_code = 2


class ModelError(LakeflowError):
    """
    The inputs were fine but the model could not produce a valid result.
    """

    exit_code = 3


class SchemaError(InputError):
    def __init__(self, message: str, row: int | None = None, *args: object) -> None:
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message, *args)


class PreconditionError(InputError):
    pass


class DataError(InputError):
    """
    The data is well formed but does not support the requested computation,
    e.g. a calendar month with no retained samples.
    """

    def __init__(self, message: str, subject: str | None = None, *args: object) -> None:
        self.subject = subject
        super().__init__(message, *args)


class DomainError(InputError):
    """
    A value outside the domain of a formula (non-finite level, negative flow...).
    """


class ConstraintViolationError(ModelError):
    def __init__(self, edge: str, month: int, value: float, *args: object) -> None:
        self.edge = edge
        self.month = month
        self.value = value
        super().__init__(
            f"Control for river '{edge}' at month {month} is out of bounds: {value}",
            *args,
        )


class NumericalError(ModelError):
    pass


class DegenerateFitError(ModelError):
    def __init__(self, pair: str, reason: str, *args: object) -> None:
        self.pair = pair
        super().__init__(f"Cannot fit {pair}: {reason}", *args)


class OptimizationError(ModelError):
    def __init__(self, message: str, plan: Any, *args: object) -> None:
        self.plan = plan
        super().__init__(message, *args)


class MpcRunError(ModelError):
    """
    Raised when a closed-loop run fails part way. `partial` holds every month completed.
    """

    def __init__(self, message: str, partial: "MpcRunRecord", *args: object) -> None:
        self.partial = partial
        super().__init__(message, *args)


class ReportValidationError(ModelError):
    pass
