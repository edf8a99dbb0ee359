"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: config errors -> 2, scenario/type
validation errors -> 3, runtime (solver/numerics) errors -> 4,
verification failures -> 5.
"""


class CharflowError(Exception):
    exit_code = 4


class ConfigError(CharflowError):
    exit_code = 2


class ValidationError(CharflowError):
    exit_code = 3


class VerificationFailure(CharflowError):
    exit_code = 5


# -- asymptotic types ------------------------------------------------------

class AsymptoticTypeError(ValidationError):
    pass


class ExponentTooLargeError(AsymptoticTypeError):
    pass


class ExponentOnCutoffLineError(AsymptoticTypeError):
    pass


class ExponentBelowCutoffError(AsymptoticTypeError):
    pass


class ClosureViolationError(AsymptoticTypeError):
    pass


# -- numerics --------------------------------------------------------------

class NonfiniteInputError(CharflowError):
    pass


class NegativeOrderError(ValidationError):
    pass


class ShapeMismatchError(CharflowError):
    pass


class TruncationExceededError(CharflowError):
    pass


class MissingSymbolError(CharflowError):
    pass


class MissingTraceError(CharflowError):
    pass


class DependencyNotSolvedError(CharflowError):
    pass


class CFLViolationError(CharflowError):
    def __init__(self, dt, dt_max):
        super().__init__(f"time step {dt:.3e} exceeds admissible {dt_max:.3e}")
        self.dt = dt
        self.dt_max = dt_max


class NonfiniteStateError(CharflowError):
    pass


class NotStrictlyHyperbolicError(CharflowError):
    pass


class NonRealEigenvalueError(CharflowError):
    pass


class EigDecompositionFailureError(CharflowError):
    pass


class IllConditionedBasisError(CharflowError):
    pass


class SingularAtZeroError(CharflowError):
    pass


class UnsupportedExactFamilyError(CharflowError):
    pass
