"""Exception hierarchy shared by every module of the package."""


class MetaImputeError(Exception):
    """Base class; ``tag`` is the short name written to result tables."""

    @property
    def tag(self):
        return type(self).__name__


class NonFiniteInput(MetaImputeError, ValueError):
    pass


class DimensionMismatch(MetaImputeError, ValueError):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class SingleClassOutcome(MetaImputeError, ValueError):
    pass


class ConvergenceFailure(MetaImputeError, RuntimeError):
    def __init__(self, message, kkt_residual=float("nan")):
        super().__init__(f"{message} (KKT residual {kkt_residual:.3e})")
        self.kkt_residual = kkt_residual


class FoldWithSingleClass(MetaImputeError, ValueError):
    pass


class TooFewPerClass(MetaImputeError, ValueError):
    pass


class ViewTooSparse(MetaImputeError, ValueError):
    pass


class EmptyColumn(MetaImputeError, ValueError):
    pass


class DonorPoolTooSmall(MetaImputeError, ValueError):
    pass


class SingularDesign(MetaImputeError, ArithmeticError):
    pass


class NoCompleteCases(MetaImputeError, ValueError):
    pass


class InvalidCorrelation(MetaImputeError, ValueError):
    pass


class FractionOutOfRange(MetaImputeError, ValueError):
    pass


class NonPositiveDuration(MetaImputeError, ValueError):
    pass


class EmptyInput(MetaImputeError, ValueError):
    pass
