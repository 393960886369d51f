"""Conjugacies linearizing nonautonomous semilinear difference equations."""

__version__ = "0.1.0"

from .conjugacy import ConjugacySolution, VerifySpec, build_conjugacy, verify_conjugacy
from .errors import (
    CertificateError,
    ConditionError,
    ConjlabError,
    ContractionError,
    ConvergenceError,
    EvaluationError,
    LimitCheckError,
    NormError,
    SingularStepError,
    SmoothnessError,
    WindowError,
)
from .hypotheses import (
    GrowthCertificate,
    NonlinearityBounds,
    SamplingSpec,
    certify_bounded_growth,
    check_conditions,
    estimate_nonlinearity_bounds,
)
from .localization import cutoff_nonlinearity, local_linearize
from .smooth import conjugacy_jacobian, smoothness_report
from .system_core import NormFamily, SemilinearSystem, TimeWindow, evolution_operator, trajectory

__all__ = [
    "CertificateError",
    "ConditionError",
    "ConjlabError",
    "ConjugacySolution",
    "ContractionError",
    "ConvergenceError",
    "EvaluationError",
    "GrowthCertificate",
    "LimitCheckError",
    "NonlinearityBounds",
    "NormError",
    "NormFamily",
    "SamplingSpec",
    "SemilinearSystem",
    "SingularStepError",
    "SmoothnessError",
    "TimeWindow",
    "VerifySpec",
    "WindowError",
    "build_conjugacy",
    "certify_bounded_growth",
    "check_conditions",
    "conjugacy_jacobian",
    "cutoff_nonlinearity",
    "estimate_nonlinearity_bounds",
    "evolution_operator",
    "local_linearize",
    "smoothness_report",
    "trajectory",
    "verify_conjugacy",
]
