from .base import BOUND_TOL, BoundContext, Check, CheckResult, VerificationReport
from .bounds import (
    DEFAULT_CHECKS,
    ContainmentCheck,
    LimitGapCheck,
    QuadraticRateCheck,
    StepGapCheck,
    StepRatioCheck,
)

__all__ = [
    "BOUND_TOL",
    "BoundContext",
    "Check",
    "CheckResult",
    "VerificationReport",
    "DEFAULT_CHECKS",
    "ContainmentCheck",
    "LimitGapCheck",
    "QuadraticRateCheck",
    "StepGapCheck",
    "StepRatioCheck",
]
