from .dro import (KAPPA_INF, DroConfig, FeatureGrid, LipschitzMode, dro_objective, exact_dro_oracle,
                  flip_margins, lipschitz_constant, optimal_gamma, robustified_loss, robustified_losses)
from .inference import SandwichParts, sandwich_covariance, sandwich_parts, wald_intervals
from .limits import (estimate_hinge_bilevel, estimate_hinge_limit, hinge_stack, scaling_law_flip,
                     scaling_law_reg)
from .result import EstimateResult
from .saddle import estimate_dro_bilinear, estimate_fy_extragradient, project_cone
from .smooth import accelerated_stack, estimate_fy_nag, estimate_l2_limit

__all__ = [
    "KAPPA_INF", "DroConfig", "FeatureGrid", "LipschitzMode", "dro_objective", "exact_dro_oracle",
    "flip_margins", "lipschitz_constant", "optimal_gamma", "robustified_loss", "robustified_losses",
    "SandwichParts", "sandwich_covariance", "sandwich_parts", "wald_intervals",
    "estimate_hinge_bilevel", "estimate_hinge_limit", "hinge_stack", "scaling_law_flip", "scaling_law_reg",
    "EstimateResult", "estimate_dro_bilinear", "estimate_fy_extragradient", "project_cone",
    "accelerated_stack", "estimate_fy_nag", "estimate_l2_limit",
]
