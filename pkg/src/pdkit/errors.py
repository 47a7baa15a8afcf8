"""Exception types shared across the toolkit."""


class PdkitError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(PdkitError, ValueError):
    pass


class NonFiniteData(PdkitError, ValueError):
    pass


class NotSymmetric(PdkitError, ValueError):
    pass


class NotPositiveDefinite(PdkitError, ValueError):
    pass


class UnboundInput(PdkitError, KeyError):
    pass


class Unsupported(PdkitError, NotImplementedError):
    pass


class StepSizeViolation(PdkitError, ValueError):
    """PDHG steps violate ``tau * sigma * ||K||^2 <= 1``."""


class Diverged(PdkitError, ArithmeticError):
    pass


class OracleFailure(PdkitError, RuntimeError):
    pass


class SpecMismatch(PdkitError, ValueError):
    """The last-layer multiplier of an NNV dual is not ``-c``."""


class InfeasibleStart(PdkitError, ValueError):
    pass


class SingularComposite(PdkitError, ValueError):
    """``A^T A + L`` is not positive definite, so dual recovery is ill-posed."""


class EmptyComparison(PdkitError, ValueError):
    pass
