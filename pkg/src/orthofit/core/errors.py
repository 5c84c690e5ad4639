class OrthofitError(Exception):
    exit_code = 1

    def __init__(self, message: str, *, exit_code: int | None = None) -> None:
        super().__init__(message)
        if exit_code is not None:
            self.exit_code = exit_code


class InputError(OrthofitError):
    pass


class OutputError(OrthofitError):
    pass


class LinAlgError(OrthofitError):
    pass


class SingularMatrixError(LinAlgError):
    pass


class NotSymmetricError(LinAlgError):
    pass


class NotPositiveDefiniteError(LinAlgError):
    pass


class LengthMismatchError(LinAlgError):
    pass


class NotOrthogonalError(LinAlgError):
    exit_code = 2


class DegenerateGroupError(OrthofitError):
    exit_code = 3


class BetaOutOfRangeError(OrthofitError):
    pass


class BetaOnBoundaryError(BetaOutOfRangeError):
    pass


class OptimizationError(OrthofitError):
    pass


class NonFiniteStartError(OptimizationError):
    pass


class NonFiniteObjectiveError(OptimizationError):
    pass


class NoConvergenceError(OptimizationError):
    pass


class NotNestedError(OrthofitError):
    pass
