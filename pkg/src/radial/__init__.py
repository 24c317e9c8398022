"""Radial duality toolkit: radial duals of nonnegative objectives and first-order solvers on them."""

from .core import (
    BracketError, DomainError, DualObjective, ExtReal, NoPrimalPoint, PrimalObjective,
    RadialityError, RadialityReport, RadialPoint, SingularityError, check_upper_radial,
    dual_eval, dual_gradient, dual_hessian, dual_of, gamma_point, perspective, primal_recover,
)
from .problems import (
    CompositeObjective, PolyhedralGauge, QpInstance, StarConvexSet, gauge_of_set,
    generate_qp, lambda_rescale, load_problem, min_compose, polyhedral_gauge_eval,
    poisson_loglik, qp_dual_subgradient, qp_dual_value, regularized_objective,
    translate_truncate, trimmed_objective,
)
from .conditioning import (
    ConditioningReport, GrowthCertificate, certify, diameter_D, growth_exponent_probe,
    radius_R, sharpness_dual_constant, smoothness_bound,
)
from .algorithms import (
    SolveTrace, StepPolicy, dykstra_project, frank_wolfe, projected_gradient,
    accelerated_projected, radial_accelerated, radial_smoothing, radial_subgradient,
    softmax_eval_grad,
)

__all__ = [
    "BracketError", "DomainError", "DualObjective", "ExtReal", "NoPrimalPoint", "PrimalObjective",
    "RadialityError", "RadialityReport", "RadialPoint", "SingularityError", "check_upper_radial",
    "dual_eval", "dual_gradient", "dual_hessian", "dual_of", "gamma_point", "perspective",
    "primal_recover", "CompositeObjective", "PolyhedralGauge", "QpInstance", "StarConvexSet",
    "gauge_of_set", "generate_qp", "lambda_rescale", "load_problem", "min_compose",
    "polyhedral_gauge_eval", "poisson_loglik", "qp_dual_subgradient", "qp_dual_value",
    "regularized_objective", "translate_truncate", "trimmed_objective", "ConditioningReport",
    "GrowthCertificate", "certify", "diameter_D", "growth_exponent_probe", "radius_R",
    "sharpness_dual_constant", "smoothness_bound", "SolveTrace", "StepPolicy", "dykstra_project",
    "frank_wolfe", "projected_gradient", "accelerated_projected", "radial_accelerated",
    "radial_smoothing", "radial_subgradient", "softmax_eval_grad",
]

__version__ = "0.1.0"
