"""Default-probability term structures for a diffusing leverage process with killing."""

from .model import (
    DefaultCurve,
    DomainError,
    FitResult,
    KillingMeasure,
    ModelParams,
    TermStructure,
    curve_from_pd,
    from_tilde,
    survival_ode_residual,
    to_tilde,
)

__version__ = "0.1.0"

__all__ = [
    "DefaultCurve",
    "DomainError",
    "FitResult",
    "KillingMeasure",
    "ModelParams",
    "TermStructure",
    "curve_from_pd",
    "from_tilde",
    "survival_ode_residual",
    "to_tilde",
]
