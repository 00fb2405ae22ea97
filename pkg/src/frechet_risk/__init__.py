"""Convex risk measures under multi-prior model uncertainty.

The priors of several experts are aggregated through their barycenter
(Wasserstein for quantile and location-scatter models, Kullback-Leibler for
grid densities); the risk of a position is the worst penalized expected loss,
with the penalty growing with the distance of a candidate model from the
barycenter.
"""

__version__ = "0.1.0"

from .errors import (ConvergenceError, FrechetRiskError, IllPosedError, NumericalError,
                     ValidationError)
from .models import (CentralLaw, GridDensityModel, LocationScatterModel, NORMAL, PriorSet,
                     QuantileModel, RiskMapping, RiskReport, ValidationReport, affine,
                     central_law, constant, custom, lincomb, linear, ls_expectation,
                     quadratic, quadratic_multi, require_valid, student_t_law,
                     validate_prior_set)
from .barycenter import (BarycenterResult, barycenter, frechet_function, kl_barycenter,
                         kl_divergence, ls_wasserstein_barycenter, quantile_barycenter)
from .risk1d import (risk_1d, risk_1d_affine, risk_1d_direct, risk_1d_foc,
                     risk_1d_perturbative, risk_1d_quadratic)
from .riskls import (eval_phi_gradients, risk_ls, risk_ls_fixed_point, risk_ls_perturbative,
                     solve_perturbation)
from .entropic import entropic_risk, entropic_risk_direct
from .allocation import AllocationReport, allocate_numeric, allocate_perturbative
from .premia import (PremiumProblem, SimulationConfig, premium_general, premium_linear_1d,
                     run_robustness_study)
