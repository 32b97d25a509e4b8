"""Numerical verification lab for linear SDEs driven by pure-jump noise:
samplers for truncated jump configurations, gradient-formula estimators,
Harnack-type bound evaluation, and finite-state consequence checks."""

from .levy_model import (LevyModel, RadialDensity, WeightFunction,
                         capped_power_weight, inverse_peak_weight,
                         log_type_profile, power_weight, stable_profile,
                         table_profile, tapered_stable_profile, validate_model,
                         nu0_integral, mu_t_exp_integral)
from .flow import FlowSpec, flow_eval, sigma_inv_T
from .pathsim import (JumpPath, sample_jump_path, path_functional, ito_integral,
                      sample_X, substream)
from .bounds import (BoundInputs, gamma_fn, neg_moment_integral,
                     gamma_weight_integral, gradient_bound_multiplier,
                     small_jump_rate, decay_time_integral, sup_norms,
                     harnack_power_bound, log_harnack_bound,
                     decreasing_profile_bounds)
from .mecke_girsanov import (MCEstimate, mecke_two_sides, semigroup_mc,
                             gradient_shift_mc, gradient_weight_mc,
                             gradient_fd_oracle, GirsanovSpec, girsanov_sample,
                             girsanov_check, normalized_jump_density)
from .harnack_lab import (HarnackReport, StableOUOracle1D, harnack_ratio_mc,
                          logharnack_mc, harnack_first_bound_mc, verify_grid)
from .finite_markov import (FiniteMarkov, PsiMatrix, kernel,
                            minimal_harnack_constant,
                            minimal_logharnack_constant, check_kernel_bounds,
                            hyperbound_check, entropy_cost_check,
                            transport_cost)

__version__ = "0.1.0"
