"""splitcount: compound models for multivariate counts.

A model here is a univariate "sum" distribution for the total paired with a
singular distribution on the discrete simplex that splits the total across
categories. The package provides the underlying series functions, the sum
and singular families, the compound algebra (PMFs, moments, marginals,
conditionals, generating functions), maximum-likelihood fitting with model
selection, finite mixtures, regression variants, and a command line tool.
"""

from .compound import (
    ConditionalSum,
    GraphClass,
    SplittingModel,
    non_singular_identity_check,
)
from .estimators import (
    SplittingEstimator,
    SplittingMixtureEstimator,
    SplittingRegressor,
    SplittingSelector,
)
from .fitting import (
    FitReport,
    MixtureModel,
    fit_call_count,
    fit_mixture,
    fit_splitting,
    select_model,
    splitting_log_likelihood,
)
from .regression import (
    RegressionSpec,
    fit_regression,
    regression_gradient,
    regression_log_lik,
)
from .series import (
    NonConvergenceError,
    SeriesControl,
    confluent_1f1,
    gauss_2f1,
    lauricella_d,
    log_multinomial_coefficient,
    log_pochhammer,
)
from .simplex import (
    ConvolutionSequence,
    DamageSum,
    DirichletMultinomial,
    Multinomial,
    MultivariateHypergeometric,
    SingularModel,
    dirichlet_multinomial_mle,
    enumerate_simplex,
    make_singular,
    multinomial_mle,
)
from .sums import (
    BetaBinomial,
    BetaNegativeBinomial,
    BetaPoisson,
    BetaSquareBinomial,
    BetaSquareNegativeBinomial,
    BetaSquarePoisson,
    Binomial,
    Dirac,
    GeneralizedBetaBinomial,
    GeneralizedBetaNegativeBinomial,
    Geometric,
    Logarithmic,
    NegativeBinomial,
    Poisson,
    SumModel,
    TruncatedShifted,
    ZeroModifiedLogarithmic,
    make_sum,
    sum_fit,
)

__version__ = "0.1.0"

__all__ = [
    "BetaBinomial",
    "BetaNegativeBinomial",
    "BetaPoisson",
    "BetaSquareBinomial",
    "BetaSquareNegativeBinomial",
    "BetaSquarePoisson",
    "Binomial",
    "ConditionalSum",
    "ConvolutionSequence",
    "DamageSum",
    "Dirac",
    "DirichletMultinomial",
    "FitReport",
    "GeneralizedBetaBinomial",
    "GeneralizedBetaNegativeBinomial",
    "Geometric",
    "GraphClass",
    "Logarithmic",
    "MixtureModel",
    "Multinomial",
    "MultivariateHypergeometric",
    "NegativeBinomial",
    "NonConvergenceError",
    "Poisson",
    "RegressionSpec",
    "SeriesControl",
    "SingularModel",
    "SplittingEstimator",
    "SplittingMixtureEstimator",
    "SplittingModel",
    "SplittingRegressor",
    "SplittingSelector",
    "SumModel",
    "TruncatedShifted",
    "ZeroModifiedLogarithmic",
    "confluent_1f1",
    "dirichlet_multinomial_mle",
    "enumerate_simplex",
    "fit_call_count",
    "fit_mixture",
    "fit_regression",
    "fit_splitting",
    "gauss_2f1",
    "lauricella_d",
    "log_multinomial_coefficient",
    "log_pochhammer",
    "make_singular",
    "make_sum",
    "multinomial_mle",
    "non_singular_identity_check",
    "regression_gradient",
    "regression_log_lik",
    "select_model",
    "splitting_log_likelihood",
    "sum_fit",
    "__version__",
]
