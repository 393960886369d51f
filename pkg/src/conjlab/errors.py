"""Exception hierarchy shared by all modules."""


class ConjlabError(Exception):
    """Base class for every error raised by conjlab."""


class WindowError(ConjlabError, ValueError):
    """A time index lies outside the computation window."""


class SingularStepError(ConjlabError):
    """The linear part is (numerically) singular at some step."""

    def __init__(self, t, cond):
        self.t = t
        self.cond = cond
        super().__init__(f"A(t) is singular at step t={t} (condition number {cond:.3e})")


class NormError(ConjlabError, ValueError):
    """A norm weight is not symmetric positive definite."""


class ContractionError(ConjlabError):
    """A contraction condition needed by a fixed-point solve is violated."""

    def __init__(self, message, factor):
        self.factor = factor
        super().__init__(f"{message} (measured contraction factor {factor:.6g})")


class ConvergenceError(ConjlabError):
    """A fixed-point iteration did not reach its tolerance."""

    def __init__(self, message, factor=None, residual=None):
        self.factor = factor
        self.residual = residual
        super().__init__(message)


class CertificateError(ConjlabError):
    """No contractive bounded-growth certificate exists on the window."""


class EvaluationError(ConjlabError, FloatingPointError):
    """A user-supplied map returned a non-finite value."""

    def __init__(self, message, sample=None):
        self.sample = sample
        super().__init__(message)


class ConditionError(ConjlabError):
    """A hypothesis required for a construction failed."""

    def __init__(self, condition, report=None):
        self.condition = condition
        self.report = report
        super().__init__(f"condition failed: {condition}")


class SmoothnessError(ConjlabError):
    """A derivative bound was violated numerically."""

    def __init__(self, message, measured, bound):
        self.measured = measured
        self.bound = bound
        super().__init__(f"{message}: measured {measured:.6g} > bound {bound:.6g}")


class LimitCheckError(ConjlabError):
    """The difference quotient of a nonlinearity does not vanish at the origin."""

    def __init__(self, message, quotients):
        self.quotients = quotients
        super().__init__(message)
