"""Fixed-effects, Poisson, bootstrap and control-function estimators."""

from .absorb import (CARRIER_MARKET, CARRIER_MARKET_STRUCTURE, MARKET_LEVEL, AbsorptionError,
                     Absorber, FixedEffectSpec, absorb)
from .bootstrap import BootstrapResult, cluster_bootstrap
from .control import ControlFunctionResult, FirstStageError, control_function
from .diagnostics import LeadTestResult, TWFEWeights, add_market_lead, lead_exogeneity_test, twfe_weights
from .ols import (EstimationError, RegressionResult, cluster_covariance, collinear_columns,
                  estimate_fe, semi_elasticity)
from .poisson import PoissonFEError, PoissonFEResult, poisson_fe
from .tables import coefficient_frame, regression_table

__all__ = [
    "CARRIER_MARKET", "CARRIER_MARKET_STRUCTURE", "MARKET_LEVEL", "AbsorptionError", "Absorber",
    "FixedEffectSpec", "absorb",
    "BootstrapResult", "cluster_bootstrap", "ControlFunctionResult", "FirstStageError",
    "control_function", "LeadTestResult", "TWFEWeights", "add_market_lead", "lead_exogeneity_test",
    "twfe_weights", "EstimationError", "RegressionResult", "cluster_covariance", "collinear_columns",
    "estimate_fe", "semi_elasticity", "PoissonFEError", "PoissonFEResult", "poisson_fe",
    "coefficient_frame", "regression_table",
]
