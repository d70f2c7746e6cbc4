"""Multivariate positive-support distributions built from elliptical laws.

Implements the Box-Cox elliptical family (coordinatewise power transforms
of truncated elliptical laws), the truncated elliptical family itself,
exact densities, Gibbs samplers, marginals, conditionals, quantiles,
moments, maximum likelihood fitting, and a Monte Carlo study harness.
"""

from .bce import (
    BceDistribution,
    ConditionalBce,
    HypothesisViolationError,
    MarginalDensity,
    MixedMomentResult,
    MomentDivergenceWarning,
    QuantileAux,
    bce_logpdf,
    bce_pdf,
    conditional,
    cv_quantile,
    marginal_block,
    marginal_pdf_1d,
    mixed_moment,
    quantile,
)
from .bce import sample as bce_sample
from .estimator import BoxCoxEllipticalMLE
from .families import Family, std_symmetric_cdf, std_symmetric_quantile
from .mle import (
    AicTableEntry,
    FitResult,
    FitSpec,
    InitializationError,
    ParameterPoint,
    aic_table,
    fit,
    initial_values,
    loglik,
)
from .integrate import (
    RectangleIntegralResult,
    ToleranceNotMetError,
    rectangle_integral,
)
from .linalg import NotPositiveDefiniteError, PdMatrix, conditional_slice
from .transform import (
    BoxCoxParams,
    Rectangle,
    forward,
    inverse,
    log_jacobian,
    rectangle_of,
)
from .truncated import (
    GibbsConfig,
    TruncatedElliptical,
    full_conditional,
    gibbs_sample,
    te1_cdf,
    te1_quantile,
    te_pdf,
)

__version__ = "0.1.0"

__all__ = [
    "BceDistribution",
    "ConditionalBce",
    "HypothesisViolationError",
    "MarginalDensity",
    "MixedMomentResult",
    "MomentDivergenceWarning",
    "QuantileAux",
    "bce_pdf",
    "bce_logpdf",
    "bce_sample",
    "conditional",
    "marginal_block",
    "marginal_pdf_1d",
    "quantile",
    "cv_quantile",
    "mixed_moment",
    "Family",
    "std_symmetric_cdf",
    "std_symmetric_quantile",
    "BoxCoxEllipticalMLE",
    "AicTableEntry",
    "FitResult",
    "FitSpec",
    "InitializationError",
    "ParameterPoint",
    "aic_table",
    "fit",
    "initial_values",
    "loglik",
    "RectangleIntegralResult",
    "ToleranceNotMetError",
    "rectangle_integral",
    "PdMatrix",
    "conditional_slice",
    "NotPositiveDefiniteError",
    "BoxCoxParams",
    "Rectangle",
    "forward",
    "inverse",
    "log_jacobian",
    "rectangle_of",
    "GibbsConfig",
    "TruncatedElliptical",
    "full_conditional",
    "gibbs_sample",
    "te1_cdf",
    "te1_quantile",
    "te_pdf",
    "__version__",
]
