"""Exception types and the process exit codes the CLI maps them to."""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class AvasrError(Exception):
    """Base class for all toolkit errors."""


class UsageError(AvasrError):
    """Bad command line or config usage (exit code 1)."""


class DataValidationError(AvasrError):
    """Malformed or inconsistent input data (exit code 2)."""


class CtcInfeasibleError(DataValidationError):
    """Target sequence cannot be aligned to the given number of frames."""


class ShapeMismatchError(AvasrError):
    """Incompatible operand shapes in a computation graph."""


class NumericError(AvasrError):
    """Non-finite values or a failed numeric verification (exit code 3)."""


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, DataValidationError):
        return EXIT_DATA
    if isinstance(exc, (NumericError, ShapeMismatchError)):
        return EXIT_NUMERIC
    return EXIT_NUMERIC
