"""Linear-exponential convergence bounds for globally weakly, locally strongly
contracting dynamics, with a primal-dual linear-programming application."""

from .bounds import (ContractionProfile, ExponentialDecay, IssProfile, ball_inclusion_radii,
                     best_rho, diff_norm_bound, iss_bound, piecewise_bound_gB,
                     rho_contraction_time, rho_contraction_time_cross_norm, same_norm_bound)
from .dynamics import Trajectory, VectorField, integrate, integrate_ensemble
from .linexp import (LinExpParams, SaturatedOdeParams, linexp_eval, saturated_ode_input_bound,
                     saturated_ode_solution)
from .lp import LpProblem, box_lp, f_lp, jacobian_f_lp, solve_lp_by_integration, vertex_oracle
from .norms import EquivalencePair, NormSpec, equivalence_coefficients, log_norm, vector_norm

__version__ = "0.1.0"
