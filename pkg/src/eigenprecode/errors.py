"""Exception hierarchy shared by all modules."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class KernelFormatError(ValueError):
    """A kernel container could not be parsed."""


class BadMagicError(KernelFormatError):
    pass


class VersionMismatchError(KernelFormatError):
    pass


class TruncatedPayloadError(KernelFormatError):
    pass


class DimensionOverflowError(KernelFormatError):
    pass


class FrameFormatError(DomainError):
    """A symbol-frame CSV is malformed or out of order."""


class RankZeroError(DomainError):
    """Every mode of a kernel falls below the singular-value floor."""


class SingularGramError(ArithmeticError):
    """The Gram matrix of projected basis frames is singular."""

    def __init__(self, message, rank):
        super().__init__(message)
        self.rank = rank


class ConvergenceError(ArithmeticError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
