"""Exception hierarchy shared by all branchlab modules."""


class BranchlabError(Exception):
    """Base class for every error raised by the package."""


class KernelFormatError(BranchlabError, ValueError):
    """A kernel file or dictionary could not be parsed."""


class InvalidKernelError(BranchlabError, ValueError):
    """A kernel failed validation and cannot be used for computation."""

    def __init__(self, report):
        self.report = report
        msgs = "; ".join(f"[{i.site}] {i.message}" for i in report.errors)
        super().__init__(f"invalid kernel: {msgs}")


class DimensionMismatch(BranchlabError, ValueError):
    pass


class OutOfRange(BranchlabError, ValueError):
    pass


class InfiniteMean(BranchlabError, ValueError):
    pass


class NotSurjective(BranchlabError, ValueError):
    pass


class NotConverged(BranchlabError, RuntimeError):
    """Fixed-point iteration hit ``max_iter``; ``result`` holds the last iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DispersalMismatch(BranchlabError, ValueError):
    pass


class GridTooLarge(BranchlabError, ValueError):
    pass


class UnsupportedVariant(BranchlabError, TypeError):
    pass


class OrderNotCertified(BranchlabError, ValueError):
    pass


class NoMetric(BranchlabError, ValueError):
    pass


class PreconditionUnverified(BranchlabError, ValueError):
    pass


class DivergentTail(BranchlabError, ValueError):
    pass


class OutOfBasin(BranchlabError, ValueError):
    pass


class ConstraintViolated(BranchlabError, ValueError):
    pass
