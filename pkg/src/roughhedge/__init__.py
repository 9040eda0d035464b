"""Pricing and hedging engine for generalized rough-volatility square-root
models: Mittag-Leffler kernels, fractional Riccati transforms, damped
Fourier pricing, forward-variance hedging and microstructure simulation."""

__version__ = "0.1.0"

from .errors import (AccuracyError, DomainError, NumericalError,
                     RoughHedgeError, ValidationError)
from .model import (ForwardVarianceCurve, MeanReversionCurve,
                    RoughHestonParams, conditional_forward_variance,
                    conditional_theta, forward_variance_from_theta,
                    theta_from_forward_variance)
from .special_fn import (GridFn, MittagLefflerParams, TimeGrid,
                         frac_derivative, frac_integral, mittag_leffler,
                         ml_cdf, ml_cdf_integral, ml_density)

__all__ = [
    "AccuracyError", "DomainError", "NumericalError", "RoughHedgeError",
    "ValidationError", "ForwardVarianceCurve", "MeanReversionCurve",
    "RoughHestonParams", "conditional_forward_variance", "conditional_theta",
    "forward_variance_from_theta", "theta_from_forward_variance", "GridFn",
    "MittagLefflerParams", "TimeGrid", "frac_derivative", "frac_integral",
    "mittag_leffler", "ml_cdf", "ml_cdf_integral", "ml_density",
    "__version__",
]
